//! Tabular text outputs shared by the command-line front end and tests.

use std::io::Write;

use crate::error::Result;
use crate::format::fmt_num;
use crate::grid::Network;
use crate::pipeline::MethodResult;

/// Distribution-factor matrix as CSV: one row per branch, one column per bus.
pub fn write_matrix_csv(
    values: &nalgebra::DMatrix<f64>,
    network: &Network,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["branch".to_string(), "from".to_string(), "to".to_string()];
    header.extend((0..network.n_buses()).map(|b| network.bus_name(b)));
    w.write_record(&header)?;
    for (l, br) in network.branches.iter().enumerate() {
        let mut row = vec![
            l.to_string(),
            network.bus_name(br.from_bus),
            network.bus_name(br.to_bus),
        ];
        row.extend(values.row(l).iter().map(|v| fmt_num(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Welfare rows of several methods in one table, tagged by method.
pub fn write_method_reports_csv(results: &[&MethodResult], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "k",
        "zone_of",
        "energy_value",
        "balancing_cost",
        "congestion_rent",
        "producer_surplus",
        "total",
        "infeasible_count",
        "recommended",
    ])?;
    for r in results {
        for c in &r.report.per_partition {
            let zones: Vec<String> = c.partition.zone_of.iter().map(|z| z.to_string()).collect();
            w.write_record([
                r.method.as_str().to_string(),
                c.partition.k.to_string(),
                zones.join(" "),
                fmt_num(c.mean.energy_value),
                fmt_num(c.mean.balancing_cost),
                fmt_num(c.mean.congestion_rent),
                fmt_num(c.mean.producer_surplus),
                fmt_num(c.mean.total),
                c.infeasible_count.to_string(),
                (c.partition == r.recommended).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ptdf::ptdf_matrix;

    #[test]
    fn matrix_csv_layout() {
        let net = fixtures::two_bus();
        let h = ptdf_matrix(&net, 1).unwrap();
        let mut buf = Vec::new();
        write_matrix_csv(&h.values, &net, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "branch,from,to,0,1\n0,0,1,1,0\n");
    }
}
