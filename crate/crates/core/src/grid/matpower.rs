//! Reader for MATPOWER-style case text.
//!
//! Only the columns this crate uses are interpreted: bus number and real
//! demand; generator bus, status and real-power bounds; branch endpoints,
//! reactance, rate A and status; the cost model from `mpc.gencost`. The
//! optional `mpc.genfuel` cell array marks wind units with `'wind'`.

use std::collections::HashMap;

use log::warn;

use super::{Branch, Bus, Generator, Network};
use crate::error::{Error, Result};

#[derive(Debug)]
struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Debug)]
enum Block {
    Matrix(Vec<Row>),
    Cells(Vec<String>),
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn strip_comment(line: &str) -> &str {
    // `%` inside quoted cell strings is not expected in case files.
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

type Scanned = (HashMap<String, Block>, Option<(usize, f64)>);

/// Split the file into `mpc.<name>` assignments.
fn scan(text: &str) -> Result<Scanned> {
    let mut blocks = HashMap::new();
    let mut base_mva = None;
    let lines: Vec<&str> = text.lines().collect();
    let mut i = 0;
    while i < lines.len() {
        let line_no = i + 1;
        let line = strip_comment(lines[i]).trim();
        i += 1;
        let Some(rest) = line.strip_prefix("mpc.") else {
            continue;
        };
        let Some((name, rhs)) = rest.split_once('=') else {
            return Err(parse_err(line_no, "assignment without '='"));
        };
        let name = name.trim().to_string();
        let rhs = rhs.trim();
        if let Some(body) = rhs.strip_prefix('[') {
            let mut rows = Vec::new();
            let mut closed = false;
            let mut pending = body.to_string();
            let mut pending_line = line_no;
            loop {
                let (segment, done) = match pending.find(']') {
                    Some(pos) => (pending[..pos].to_string(), true),
                    None => (pending.clone(), false),
                };
                for chunk in segment.split(';') {
                    let chunk = chunk.trim();
                    if chunk.is_empty() {
                        continue;
                    }
                    let values = chunk
                        .split(|c: char| c.is_whitespace() || c == ',')
                        .filter(|t| !t.is_empty())
                        .map(|t| {
                            t.parse::<f64>().map_err(|_| {
                                parse_err(pending_line, format!("non-numeric entry '{t}' in mpc.{name}"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    rows.push(Row {
                        line: pending_line,
                        values,
                    });
                }
                if done {
                    closed = true;
                    break;
                }
                if i >= lines.len() {
                    break;
                }
                pending = strip_comment(lines[i]).to_string();
                pending_line = i + 1;
                i += 1;
            }
            if !closed {
                return Err(parse_err(line_no, format!("unterminated matrix mpc.{name}")));
            }
            blocks.insert(name, Block::Matrix(rows));
        } else if let Some(body) = rhs.strip_prefix('{') {
            let mut cells = Vec::new();
            let mut pending = body.to_string();
            let mut closed = false;
            loop {
                let (segment, done) = match pending.find('}') {
                    Some(pos) => (pending[..pos].to_string(), true),
                    None => (pending.clone(), false),
                };
                let mut rest = segment.as_str();
                while let Some(start) = rest.find('\'') {
                    let after = &rest[start + 1..];
                    let Some(end) = after.find('\'') else {
                        return Err(parse_err(i, format!("unterminated string in mpc.{name}")));
                    };
                    cells.push(after[..end].to_string());
                    rest = &after[end + 1..];
                }
                if done {
                    closed = true;
                    break;
                }
                if i >= lines.len() {
                    break;
                }
                pending = strip_comment(lines[i]).to_string();
                i += 1;
            }
            if !closed {
                return Err(parse_err(line_no, format!("unterminated cell array mpc.{name}")));
            }
            blocks.insert(name, Block::Cells(cells));
        } else if name == "baseMVA" {
            let value = rhs.trim_end_matches(';').trim();
            let v = value
                .parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("invalid baseMVA '{value}'")))?;
            base_mva = Some((line_no, v));
        }
    }
    Ok((blocks, base_mva))
}

fn matrix<'a>(blocks: &'a HashMap<String, Block>, name: &str) -> Result<Option<&'a [Row]>> {
    match blocks.get(name) {
        None => Ok(None),
        Some(Block::Matrix(rows)) => Ok(Some(rows)),
        Some(Block::Cells(_)) => Err(parse_err(0, format!("mpc.{name} must be a numeric matrix"))),
    }
}

fn require_cols(row: &Row, n: usize, table: &str) -> Result<()> {
    if row.values.len() < n {
        Err(parse_err(
            row.line,
            format!(
                "mpc.{table} row has {} columns, need at least {n}",
                row.values.len()
            ),
        ))
    } else {
        Ok(())
    }
}

/// Marginal cost at `p_max` of one `mpc.gencost` row, and whether the
/// curve had to be linearized to get it.
fn marginal_cost(row: &Row, p_max: f64) -> Result<(f64, bool)> {
    require_cols(row, 4, "gencost")?;
    let model = row.values[0] as i64;
    let ncost = row.values[3] as usize;
    let coeffs = &row.values[4..];
    match model {
        2 => {
            if coeffs.len() < ncost {
                return Err(parse_err(row.line, "gencost row shorter than NCOST"));
            }
            let c = &coeffs[..ncost];
            let nonlinear = ncost > 2 && c[..ncost - 2].iter().any(|&v| v != 0.0);
            // d/dp Σ c_i p^(n-1-i)
            let mut slope = 0.0;
            for (i, &ci) in c.iter().enumerate() {
                let power = (ncost - 1 - i) as i32;
                if power >= 1 {
                    slope += f64::from(power) * ci * p_max.powi(power - 1);
                }
            }
            Ok((slope, nonlinear))
        }
        1 => {
            if coeffs.len() < 2 * ncost || ncost < 2 {
                return Err(parse_err(row.line, "piecewise gencost needs NCOST >= 2 points"));
            }
            let pts: Vec<(f64, f64)> = (0..ncost)
                .map(|k| (coeffs[2 * k], coeffs[2 * k + 1]))
                .collect();
            let nonlinear = ncost > 2;
            let mut seg = pts.len() - 2;
            for k in 0..pts.len() - 1 {
                if p_max <= pts[k + 1].0 {
                    seg = k;
                    break;
                }
            }
            let (p0, f0) = pts[seg];
            let (p1, f1) = pts[seg + 1];
            if p1 == p0 {
                return Err(parse_err(row.line, "piecewise gencost has repeated breakpoint"));
            }
            Ok(((f1 - f0) / (p1 - p0), nonlinear))
        }
        other => Err(parse_err(row.line, format!("unknown cost model {other}"))),
    }
}

/// Parse MATPOWER case text into an (unvalidated) network.
pub fn parse_matpower(text: &str) -> Result<Network> {
    let (blocks, base) = scan(text)?;
    let base_mva = base.map(|(_, v)| v).unwrap_or(100.0);

    let bus_rows = matrix(&blocks, "bus")?.ok_or_else(|| parse_err(0, "missing mpc.bus"))?;
    let gen_rows = matrix(&blocks, "gen")?.ok_or_else(|| parse_err(0, "missing mpc.gen"))?;
    let branch_rows =
        matrix(&blocks, "branch")?.ok_or_else(|| parse_err(0, "missing mpc.branch"))?;
    let cost_rows = matrix(&blocks, "gencost")?.unwrap_or(&[]);
    let fuel: Vec<String> = match blocks.get("genfuel") {
        Some(Block::Cells(c)) => c.clone(),
        Some(Block::Matrix(_)) => return Err(parse_err(0, "mpc.genfuel must be a cell array")),
        None => Vec::new(),
    };
    if !cost_rows.is_empty() && cost_rows.len() < gen_rows.len() {
        return Err(parse_err(
            cost_rows[0].line,
            format!(
                "mpc.gencost has {} rows for {} generators",
                cost_rows.len(),
                gen_rows.len()
            ),
        ));
    }
    if !fuel.is_empty() && fuel.len() != gen_rows.len() {
        return Err(parse_err(
            0,
            format!("mpc.genfuel has {} entries for {} generators", fuel.len(), gen_rows.len()),
        ));
    }

    let mut index_of = HashMap::new();
    let mut buses = Vec::with_capacity(bus_rows.len());
    for row in bus_rows {
        require_cols(row, 3, "bus")?;
        let number = row.values[0];
        if number.fract() != 0.0 {
            return Err(parse_err(row.line, format!("bus number {number} is not an integer")));
        }
        let number = number as i64;
        let id = buses.len();
        if index_of.insert(number, id).is_some() {
            return Err(parse_err(row.line, format!("duplicate bus number {number}")));
        }
        buses.push(Bus {
            id,
            demand: row.values[2],
            label: Some(number.to_string()),
        });
    }
    let lookup = |row: &Row, value: f64| -> Result<usize> {
        index_of
            .get(&(value as i64))
            .copied()
            .ok_or_else(|| parse_err(row.line, format!("unknown bus number {value}")))
    };

    let mut generators = Vec::new();
    let mut linearized = 0;
    for (k, row) in gen_rows.iter().enumerate() {
        require_cols(row, 10, "gen")?;
        if row.values[7] <= 0.0 {
            continue;
        }
        let bus = lookup(row, row.values[0])?;
        let p_max = row.values[8];
        let p_min = row.values[9];
        let marginal_cost = match cost_rows.get(k) {
            Some(cost) => {
                let (mc, nonlinear) = marginal_cost(cost, p_max)?;
                linearized += usize::from(nonlinear);
                mc
            }
            None => 0.0,
        };
        let is_wind = fuel.get(k).is_some_and(|f| f.eq_ignore_ascii_case("wind"));
        generators.push(Generator {
            bus,
            marginal_cost,
            p_min,
            p_max,
            is_wind,
            rated_capacity: is_wind.then_some(p_max),
            label: Some(format!("{}{}", if is_wind { "w" } else { "g" }, k + 1)),
        });
    }

    let mut branches = Vec::new();
    for row in branch_rows {
        require_cols(row, 6, "branch")?;
        let status = row.values.get(10).copied().unwrap_or(1.0);
        if status <= 0.0 {
            continue;
        }
        let from_bus = lookup(row, row.values[0])?;
        let to_bus = lookup(row, row.values[1])?;
        let rate = row.values[5];
        branches.push(Branch {
            id: branches.len(),
            from_bus,
            to_bus,
            reactance: row.values[3],
            flow_limit: (rate > 0.0).then_some(rate),
        });
    }
    if linearized > 0 {
        warn!("{linearized} nonlinear generator cost curves reduced to their marginal cost at p_max");
    }

    Ok(Network {
        base_mva,
        buses,
        branches,
        generators,
    })
}
