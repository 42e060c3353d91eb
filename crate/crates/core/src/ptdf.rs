//! Power transfer distribution factors and the reference-free operator.
//!
//! `H^i` maps balanced nodal injections to branch flows with bus `i` as the
//! slack. Because every `H^i` agrees on balanced injections, any row may be
//! shifted by a constant without changing the flows it produces. Shifting
//! each row by minus the mean of its two endpoint factors gives an operator
//! `S` that no longer depends on `i`, with `S_ln = −S_lm` for every line
//! `l = (n, m)`. The signs in a row of `S` then split the buses into those
//! whose injections push flow along the line and those that push against it.

use nalgebra::{DMatrix, DVector};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::grid::{components_within, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct PtdfMatrix {
    pub values: DMatrix<f64>,
    pub reference_bus: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedPtdf {
    pub values: DMatrix<f64>,
}

/// Nodal injections in MW, withdrawals negative.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionVector(pub Vec<f64>);

impl InjectionVector {
    pub fn imbalance(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_balanced(&self, tol: f64) -> bool {
        let scale = self.0.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        self.imbalance().abs() <= tol * scale
    }
}

/// Anything that maps injections to flows row by row.
pub trait FlowOperator {
    fn matrix(&self) -> &DMatrix<f64>;
}

impl FlowOperator for PtdfMatrix {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
}

impl FlowOperator for GeneralizedPtdf {
    fn matrix(&self) -> &DMatrix<f64> {
        &self.values
    }
}

/// PTDF matrix with `reference_bus` as slack: `diag(b)·A_r·B_r⁻¹`, padded
/// with a zero column at the reference.
pub fn ptdf_matrix(network: &Network, reference_bus: usize) -> Result<PtdfMatrix> {
    let n = network.n_buses();
    let m = network.n_branches();
    if reference_bus >= n {
        return Err(Error::Config(format!(
            "reference bus {reference_bus} outside 0..{n}"
        )));
    }
    let keep: Vec<usize> = (0..n).filter(|&b| b != reference_bus).collect();
    let b_full = network.susceptance_matrix();
    let b_red = b_full.select_rows(&keep).select_columns(&keep);
    let lu = b_red.lu();
    let inv = lu.try_inverse().ok_or_else(|| {
        Error::Solver("reduced susceptance matrix is singular (network disconnected?)".into())
    })?;

    let mut values = DMatrix::zeros(m, n);
    for (l, br) in network.branches.iter().enumerate() {
        let y = 1.0 / br.reactance;
        // Row of A_r: +1 at from, −1 at to, restricted to non-reference buses.
        for (c, _) in keep.iter().enumerate() {
            let mut v = 0.0;
            if br.from_bus != reference_bus {
                let i = keep.binary_search(&br.from_bus).unwrap();
                v += inv[(i, c)];
            }
            if br.to_bus != reference_bus {
                let j = keep.binary_search(&br.to_bus).unwrap();
                v -= inv[(j, c)];
            }
            values[(l, keep[c])] = y * v;
        }
    }
    Ok(PtdfMatrix {
        values,
        reference_bus,
    })
}

/// `S = H − ½·diagv(H·|A|ᵀ)·uᵀ`: each row shifted by minus the mean of its
/// two endpoint factors.
pub fn generalized_ptdf(h: &PtdfMatrix, network: &Network) -> Result<GeneralizedPtdf> {
    let (m, n) = h.values.shape();
    if m != network.n_branches() || n != network.n_buses() {
        return Err(Error::Dimension {
            expected: network.n_branches() * network.n_buses(),
            actual: m * n,
        });
    }
    let abs_incidence = network.incidence_matrix().abs();
    let product = &h.values * abs_incidence.transpose();
    let shift = product.diagonal() * 0.5;
    let ones = DVector::from_element(n, 1.0);
    let values = &h.values - shift * ones.transpose();
    Ok(GeneralizedPtdf { values })
}

/// Branch flows produced by `p` through either operator.
pub fn flows_from_injections(operator: &impl FlowOperator, p: &InjectionVector) -> Result<Vec<f64>> {
    let mat = operator.matrix();
    if mat.ncols() != p.0.len() {
        return Err(Error::Dimension {
            expected: mat.ncols(),
            actual: p.0.len(),
        });
    }
    let v = DVector::from_column_slice(&p.0);
    Ok((mat * v).iter().copied().collect())
}

/// Split `scope` into two contiguous zones by the signs of row `line` of `S`.
///
/// Buses with `S > tol_sign` or `|S| <= tol_sign` go to the plus zone, the
/// rest to the minus zone. Components of a zone that do not contain that
/// zone's line endpoint are moved to the other zone until nothing moves.
pub fn sign_bipartition(
    s: &GeneralizedPtdf,
    line: usize,
    scope: &[usize],
    network: &Network,
    tol: &Tolerances,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let br = network
        .branches
        .get(line)
        .ok_or_else(|| Error::Config(format!("unknown branch {line}")))?;
    let (n_end, m_end) = (br.from_bus, br.to_bus);
    if !scope.contains(&n_end) || !scope.contains(&m_end) {
        return Err(Error::DegenerateSplit {
            line,
            reason: "line endpoints are not both inside the scope".into(),
        });
    }
    let row = s.values.row(line);
    let mut plus: Vec<usize> = Vec::new();
    let mut minus: Vec<usize> = Vec::new();
    for &k in scope {
        if row[k] < -tol.tol_sign {
            minus.push(k);
        } else {
            plus.push(k);
        }
    }
    // End antisymmetry gives S_ln > 0 > S_lm for a proper line; anchor the
    // zones on the endpoints regardless.
    let (plus_anchor, minus_anchor) = if row[n_end] >= row[m_end] {
        (n_end, m_end)
    } else {
        (m_end, n_end)
    };
    if plus.contains(&minus_anchor) || minus.contains(&plus_anchor) {
        return Err(Error::DegenerateSplit {
            line,
            reason: "line endpoints share a sign".into(),
        });
    }

    let adj = network.adjacency();
    for _ in 0..=scope.len() {
        let moved_plus = strand_to_other(&adj, &mut plus, &mut minus, plus_anchor);
        let moved_minus = strand_to_other(&adj, &mut minus, &mut plus, minus_anchor);
        let moved = moved_plus || moved_minus;
        if !moved {
            break;
        }
    }
    plus.sort_unstable();
    minus.sort_unstable();
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::DegenerateSplit {
            line,
            reason: "repair emptied a zone".into(),
        });
    }
    if components_within(&adj, &plus).len() != 1 || components_within(&adj, &minus).len() != 1 {
        return Err(Error::DegenerateSplit {
            line,
            reason: "connectivity repair did not converge".into(),
        });
    }
    Ok((plus, minus))
}

/// Move every component of `zone` that lacks `anchor` into `other`.
fn strand_to_other(
    adj: &[Vec<usize>],
    zone: &mut Vec<usize>,
    other: &mut Vec<usize>,
    anchor: usize,
) -> bool {
    let comps = components_within(adj, zone);
    if comps.len() <= 1 {
        return false;
    }
    let mut moved = false;
    for comp in comps.into_iter().filter(|c| !c.contains(&anchor)) {
        zone.retain(|b| !comp.contains(b));
        other.extend(comp);
        moved = true;
    }
    moved
}
