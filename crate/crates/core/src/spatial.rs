//! Areal spatial basis from the eigenvectors of an adjacency matrix.
//!
//! Only eigenvectors with positive eigenvalues (positive spatial dependence)
//! are kept, sorted by decreasing eigenvalue, optionally truncated further.

use std::collections::BTreeSet;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues at or below this are treated as non-positive.
pub const POSITIVE_EIGENVALUE_TOL: f64 = 1e-10;

const SIGN_TOL: f64 = 1e-8;

const US_STATES_EDGES: &str = include_str!("../data/us_states_adjacency.txt");

/// Postal codes of the bundled US fixture, in area order (area 1 is `AK`).
pub const US_STATE_CODES: [&str; 49] = [
    "AK", "AL", "AR", "AZ", "CA", "CO", "CT", "DE", "FL", "GA", "IA", "ID", "IL", "IN", "KS", "KY", "LA",
    "MA", "MD", "ME", "MI", "MN", "MO", "MS", "MT", "NC", "ND", "NE", "NH", "NJ", "NM", "NV", "NY", "OH",
    "OK", "OR", "PA", "RI", "SC", "SD", "TN", "TX", "UT", "VA", "VT", "WA", "WI", "WV", "WY",
];

/// Undirected graph over areas `1..=n_areas`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    n_areas: usize,
    edges: Vec<(usize, usize)>,
}

impl AdjacencyGraph {
    /// Builds a graph from 1-based area pairs. Pairs are unordered; a pair
    /// listed twice (in either orientation) is rejected.
    pub fn new(n_areas: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_areas == 0 {
            return Err(Error::Data {
                row: None,
                msg: "adjacency graph needs at least one area".into(),
            });
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (a, b) in edges {
            if a == 0 || b == 0 || a > n_areas || b > n_areas {
                return Err(Error::data(
                    None,
                    format!("edge ({a}, {b}) outside areas 1..={n_areas}"),
                ));
            }
            if a == b {
                return Err(Error::data(None, format!("self-loop on area {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::data(None, format!("duplicate edge ({a}, {b})")));
            }
            out.push(key);
        }
        Ok(Self { n_areas, edges: out })
    }

    /// Rook-adjacent lattice, areas numbered row-major from 1.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let id = |r: usize, c: usize| r * cols + c + 1;
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((id(r, c), id(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((id(r, c), id(r + 1, c)));
                }
            }
        }
        Self::new(rows * cols, edges)
    }

    /// The bundled contiguous-US fixture (49 areas, see [`US_STATE_CODES`]).
    pub fn us_states() -> Self {
        parse_edge_list(US_STATES_EDGES, Some(US_STATE_CODES.len())).expect("bundled fixture is well formed")
    }

    pub fn n_areas(&self) -> usize {
        self.n_areas
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacency_matrix(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_areas, self.n_areas);
        for &(i, j) in &self.edges {
            a[(i - 1, j - 1)] = 1.0;
            a[(j - 1, i - 1)] = 1.0;
        }
        a
    }
}

/// Parses an edge list: one whitespace-separated `a b` pair of 1-based area
/// indices per line. Blank lines and `#` comments are skipped. Without
/// `n_areas` the largest index seen defines the area count.
pub fn parse_edge_list(text: &str, n_areas: Option<usize>) -> Result<AdjacencyGraph> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let parse = |s: Option<&str>| -> Result<usize> {
            s.ok_or_else(|| Error::data(lineno + 1, "expected two area indices"))?
                .parse::<usize>()
                .map_err(|e| Error::data(lineno + 1, format!("bad area index: {e}")))
        };
        let a = parse(parts.next())?;
        let b = parse(parts.next())?;
        if parts.next().is_some() {
            return Err(Error::data(lineno + 1, "expected exactly two area indices"));
        }
        edges.push((a, b));
    }
    let n = n_areas.unwrap_or_else(|| edges.iter().map(|&(a, b)| a.max(b)).max().unwrap_or(0));
    AdjacencyGraph::new(n, edges)
}

pub fn read_edge_list(path: impl AsRef<Path>, n_areas: Option<usize>) -> Result<AdjacencyGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_edge_list(&text, n_areas)
}

/// Basis loadings (`n_areas × m`) with their eigenvalues, largest first.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix<T: Real> {
    values: DMatrix<T>,
    eigenvalues: Vec<T>,
}

impl<T: Real> BasisMatrix<T> {
    /// Wraps an arbitrary loading matrix, e.g. a user-supplied basis. The
    /// eigenvalue list may be empty when unknown.
    pub fn from_values(values: DMatrix<T>, eigenvalues: Vec<T>) -> Result<Self> {
        if !eigenvalues.is_empty() && eigenvalues.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} eigenvalues for {} basis columns",
                eigenvalues.len(),
                values.ncols()
            )));
        }
        Ok(Self { values, eigenvalues })
    }

    /// A basis with no columns: the model then has no spatial effect.
    pub fn empty(n_areas: usize) -> Self {
        Self {
            values: DMatrix::zeros(n_areas, 0),
            eigenvalues: Vec::new(),
        }
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn n_areas(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_columns(&self) -> usize {
        self.values.ncols()
    }

    /// Loadings of a 1-based area.
    pub fn row(&self, area: usize) -> Result<Vec<T>> {
        if area == 0 || area > self.n_areas() {
            return Err(Error::UnknownArea {
                area,
                n_areas: self.n_areas(),
            });
        }
        Ok(self.values.row(area - 1).iter().copied().collect())
    }
}

/// Eigenvectors of the adjacency matrix with positive eigenvalues, in
/// decreasing eigenvalue order, optionally truncated to `max_columns`.
///
/// Each column is oriented so that its first entry with magnitude above
/// `1e-8` is positive.
pub fn moran_basis<T: Real>(graph: &AdjacencyGraph, max_columns: Option<usize>) -> Result<BasisMatrix<T>> {
    let adjacency = graph.adjacency_matrix();
    let n = graph.n_areas();
    let eig = SymmetricEigen::new(adjacency);
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > POSITIVE_EIGENVALUE_TOL)
        .collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    if let Some(limit) = max_columns {
        order.truncate(limit);
    }
    let m = order.len();
    let mut values = DMatrix::<T>::zeros(n, m);
    let mut eigenvalues = Vec::with_capacity(m);
    for (col, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        let sign = v
            .iter()
            .find(|x| x.abs() > SIGN_TOL)
            .map(|&x| if x < 0.0 { -1.0 } else { 1.0 })
            .unwrap_or(1.0);
        for row in 0..n {
            values[(row, col)] = T::lit(sign * v[row]);
        }
        eigenvalues.push(T::lit(eig.eigenvalues[src]));
    }
    Ok(BasisMatrix { values, eigenvalues })
}

/// Basis values as CSV: `area,psi_1..psi_m`.
pub fn write_basis_csv<T: Real, W: std::io::Write>(writer: W, basis: &BasisMatrix<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["area".to_string()];
    header.extend((1..=basis.n_columns()).map(|j| format!("psi_{j}")));
    w.write_record(&header).map_err(|e| Error::csv("basis", e))?;
    for a in 0..basis.n_areas() {
        let mut row = vec![(a + 1).to_string()];
        row.extend(basis.values().row(a).iter().map(|v| v.as_f64().to_string()));
        w.write_record(&row).map_err(|e| Error::csv("basis", e))?;
    }
    w.flush().map_err(|e| Error::io("basis", e))
}

/// Retained eigenvalues as CSV: `column,eigenvalue`.
pub fn write_eigenvalues_csv<T: Real, W: std::io::Write>(writer: W, basis: &BasisMatrix<T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["column", "eigenvalue"])
        .map_err(|e| Error::csv("eigenvalues", e))?;
    for (j, v) in basis.eigenvalues().iter().enumerate() {
        w.write_record([(j + 1).to_string(), v.as_f64().to_string()])
            .map_err(|e| Error::csv("eigenvalues", e))?;
    }
    w.flush().map_err(|e| Error::io("eigenvalues", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> AdjacencyGraph {
        AdjacencyGraph::new(3, [(1, 2), (2, 3)]).unwrap()
    }

    #[test]
    fn path_graph_keeps_one_column() {
        let b = moran_basis::<f64>(&path3(), None).unwrap();
        assert_eq!(b.n_columns(), 1);
        assert!((b.eigenvalues()[0] - 2f64.sqrt()).abs() < 1e-12);
        // eigenvector (1, √2, 1) / 2
        let v = b.values();
        assert!((v[(0, 0)] - 0.5).abs() < 1e-12);
        assert!((v[(1, 0)] - 0.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn edgeless_graph_has_no_columns() {
        let g = AdjacencyGraph::new(4, []).unwrap();
        let b = moran_basis::<f64>(&g, None).unwrap();
        assert_eq!(b.n_columns(), 0);
        assert_eq!(b.n_areas(), 4);
    }

    #[test]
    fn triangle_keeps_the_perron_vector() {
        let g = AdjacencyGraph::new(3, [(1, 2), (2, 3), (1, 3)]).unwrap();
        let b = moran_basis::<f64>(&g, None).unwrap();
        assert_eq!(b.n_columns(), 1);
        assert!((b.eigenvalues()[0] - 2.0).abs() < 1e-12);
        for r in 0..3 {
            assert!((b.values()[(r, 0)] - 3f64.sqrt().recip()).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_5x5_has_ten_positive_eigenvalues() {
        let g = AdjacencyGraph::grid(5, 5).unwrap();
        assert_eq!(g.edges().len(), 40);
        let b = moran_basis::<f64>(&g, None).unwrap();
        assert_eq!(b.n_columns(), 10);
        let b = moran_basis::<f64>(&g, Some(4)).unwrap();
        assert_eq!(b.n_columns(), 4);
        assert!(b.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn us_fixture_has_twenty_columns() {
        let g = AdjacencyGraph::us_states();
        assert_eq!(g.n_areas(), 49);
        assert_eq!(g.edges().len(), 105);
        let b = moran_basis::<f64>(&g, None).unwrap();
        assert_eq!(b.n_columns(), 20);
    }

    #[test]
    fn columns_are_orthonormal_and_sign_fixed() {
        let g = AdjacencyGraph::us_states();
        let b = moran_basis::<f64>(&g, None).unwrap();
        let v = b.values();
        let gram = v.transpose() * v;
        let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
        assert!((gram - eye).abs().max() < 1e-8);
        for col in v.column_iter() {
            let first = col.iter().find(|x| x.abs() > SIGN_TOL).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn f32_basis_matches_f64() {
        let g = AdjacencyGraph::grid(3, 4).unwrap();
        let b64 = moran_basis::<f64>(&g, None).unwrap();
        let b32 = moran_basis::<f32>(&g, None).unwrap();
        assert_eq!(b64.n_columns(), b32.n_columns());
        for (a, b) in b64.values().iter().zip(b32.values().iter()) {
            assert!((*a as f32 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn graph_validation() {
        assert!(AdjacencyGraph::new(3, [(1, 1)]).is_err());
        assert!(AdjacencyGraph::new(3, [(1, 2), (2, 1)]).is_err());
        assert!(AdjacencyGraph::new(3, [(1, 4)]).is_err());
        assert!(AdjacencyGraph::new(3, [(0, 2)]).is_err());
        assert!(AdjacencyGraph::new(0, []).is_err());
    }

    #[test]
    fn edge_list_parsing() {
        let g = parse_edge_list("# comment\n1 2\n\n2 3  # trailing\n", None).unwrap();
        assert_eq!(g, path3());
        let g = parse_edge_list("1 2\n", Some(5)).unwrap();
        assert_eq!(g.n_areas(), 5);
        assert!(matches!(
            parse_edge_list("1 2\n3\n", None),
            Err(Error::Data { row: Some(2), .. })
        ));
        assert!(parse_edge_list("1 x\n", None).is_err());
        assert!(parse_edge_list("1 2 3\n", None).is_err());
    }

    #[test]
    fn basis_row_lookup() {
        let b = moran_basis::<f64>(&path3(), None).unwrap();
        assert_eq!(b.row(2).unwrap().len(), 1);
        assert!(matches!(b.row(4), Err(Error::UnknownArea { area: 4, .. })));
        assert!(b.row(0).is_err());
    }
}
