//! Site Hamiltonian and geometry ingestion, exciton-basis diagonalization.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

/// Absolute tolerance for accepting (and averaging away) asymmetry in a
/// loaded Hamiltonian, cm^-1.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Eigenvalues closer than this are treated as degenerate when ordering.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: cannot parse `{token}` as a number")]
    Parse {
        path: String,
        line: usize,
        token: String,
    },
    #[error("matrix is not square: {rows} rows, but row {row} has {cols} entries")]
    NotSquare { rows: usize, row: usize, cols: usize },
    #[error("matrix is asymmetric: |H({i},{j}) - H({j},{i})| = {dev:.3e} exceeds {SYMMETRY_TOL:.0e}")]
    Asymmetric { i: usize, j: usize, dev: f64 },
    #[error("need at least 2 sites, got {0}")]
    TooFewSites(usize),
    #[error("{path}:{line}: expected `label x y z`")]
    BadGeometryLine { path: String, line: usize },
    #[error("sites {i} and {j} coincide")]
    CoincidentSites { i: usize, j: usize },
}

/// Frenkel exciton Hamiltonian over n chromophore sites: diagonal entries
/// are site transition energies E_j, off-diagonal entries are excitonic
/// couplings J_ij, all in cm^-1. Exactly symmetric after construction.
#[derive(Debug, Clone)]
pub struct SiteHamiltonian {
    matrix: DMatrix<f64>,
}

impl SiteHamiltonian {
    /// Validates and symmetrizes a candidate matrix. Asymmetry below
    /// [`SYMMETRY_TOL`] is averaged away; anything larger is an error.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self, ModelError> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(ModelError::NotSquare {
                rows: n,
                row: 0,
                cols: matrix.ncols(),
            });
        }
        if n < 2 {
            return Err(ModelError::TooFewSites(n));
        }
        let mut m = matrix;
        for i in 0..n {
            for j in (i + 1)..n {
                let dev = (m[(i, j)] - m[(j, i)]).abs();
                if dev > SYMMETRY_TOL {
                    return Err(ModelError::Asymmetric { i: i + 1, j: j + 1, dev });
                }
                let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = avg;
                m[(j, i)] = avg;
            }
        }
        Ok(Self { matrix: m })
    }

    /// Loads a whitespace-separated n x n matrix. Lines starting with `#`
    /// (and trailing `#` comments) are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: shown.clone(),
            source,
        })?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut row_lines: Vec<usize> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for token in line.split_whitespace() {
                let value: f64 = token.parse().map_err(|_| ModelError::Parse {
                    path: shown.clone(),
                    line: lineno + 1,
                    token: token.to_string(),
                })?;
                row.push(value);
            }
            rows.push(row);
            row_lines.push(lineno + 1);
        }
        let n = rows.len();
        for (k, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::NotSquare {
                    rows: n,
                    row: row_lines[k],
                    cols: row.len(),
                });
            }
        }
        let matrix = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::from_matrix(matrix)
    }

    pub fn n_sites(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Chromophore site-center positions in Angstrom. Distances are always
/// computed from the stored coordinates, never stored themselves.
#[derive(Debug, Clone)]
pub struct Geometry {
    labels: Vec<String>,
    coords: Vec<[f64; 3]>,
}

impl Geometry {
    pub fn from_coords(labels: Vec<String>, coords: Vec<[f64; 3]>) -> Result<Self, ModelError> {
        assert_eq!(labels.len(), coords.len());
        if coords.len() < 2 {
            return Err(ModelError::TooFewSites(coords.len()));
        }
        let g = Self { labels, coords };
        for i in 1..=g.n_sites() {
            for j in (i + 1)..=g.n_sites() {
                if g.distance(i, j) < 1e-6 {
                    return Err(ModelError::CoincidentSites { i, j });
                }
            }
        }
        Ok(g)
    }

    /// Loads `label x y z` lines; `#` starts a comment.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let shown = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: shown.clone(),
            source,
        })?;
        let mut labels = Vec::new();
        let mut coords = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(ModelError::BadGeometryLine {
                    path: shown.clone(),
                    line: lineno + 1,
                });
            }
            let mut xyz = [0.0; 3];
            for (k, token) in fields[1..].iter().enumerate() {
                xyz[k] = token.parse().map_err(|_| ModelError::Parse {
                    path: shown.clone(),
                    line: lineno + 1,
                    token: token.to_string(),
                })?;
            }
            labels.push(fields[0].to_string());
            coords.push(xyz);
        }
        Self::from_coords(labels, coords)
    }

    pub fn n_sites(&self) -> usize {
        self.coords.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Distance in Angstrom between sites i and j (1-based site numbers).
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let a = self.coords[i - 1];
        let b = self.coords[j - 1];
        let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    /// Full distance matrix in Angstrom (zero diagonal).
    pub fn distance_matrix(&self) -> DMatrix<f64> {
        let n = self.n_sites();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                self.distance(i + 1, j + 1)
            }
        })
    }
}

/// Energy eigenbasis of a [`SiteHamiltonian`]: energies are ascending and
/// shifted so the lowest exciton sits at zero; eigenvector columns are the
/// exciton wavefunctions in the site basis.
#[derive(Debug, Clone)]
pub struct ExcitonBasis {
    energies: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    energy_shift: f64,
}

impl ExcitonBasis {
    /// Exciton energies in cm^-1, ascending, minimum exactly zero.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Orthonormal eigenvector matrix; column alpha is exciton alpha.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// Global shift subtracted from the raw eigenvalues (the lowest one).
    pub fn energy_shift(&self) -> f64 {
        self.energy_shift
    }

    pub fn n_excitons(&self) -> usize {
        self.energies.len()
    }

    /// Site weight |<j|alpha>|^2 for site j (1-based) in exciton alpha
    /// (0-based).
    pub fn site_weight(&self, exciton: usize, site: usize) -> f64 {
        let amp = self.eigenvectors[(site - 1, exciton)];
        amp * amp
    }

    /// Reconstructs the site Hamiltonian as V diag(E + shift) V^T.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.n_excitons();
        let d = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.energies[i] + self.energy_shift
            } else {
                0.0
            }
        });
        &self.eigenvectors * d * self.eigenvectors.transpose()
    }
}

/// Diagonalizes the site Hamiltonian into the exciton basis.
///
/// Ordering is by ascending energy; degenerate pairs are ordered by the
/// index of their maximum-amplitude site, and each eigenvector's sign is
/// fixed so the largest-magnitude component is positive. Both choices make
/// reports reproducible.
pub fn diagonalize(h: &SiteHamiltonian) -> ExcitonBasis {
    let n = h.n_sites();
    let eig = h.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    let max_site = |col: usize| -> usize {
        let mut best = 0;
        for i in 0..n {
            if eig.eigenvectors[(i, col)].abs() > eig.eigenvectors[(best, col)].abs() {
                best = i;
            }
        }
        best
    };
    order.sort_by(|&a, &b| {
        match eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap() {
            std::cmp::Ordering::Equal => max_site(a).cmp(&max_site(b)),
            other => {
                if (eig.eigenvalues[a] - eig.eigenvalues[b]).abs() < DEGENERACY_TOL {
                    max_site(a).cmp(&max_site(b))
                } else {
                    other
                }
            }
        }
    });

    let shift = eig.eigenvalues[order[0]];
    let mut energies = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (alpha, &col) in order.iter().enumerate() {
        energies.push(eig.eigenvalues[col] - shift);
        let pivot = max_site(col);
        let sign = if eig.eigenvectors[(pivot, col)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, alpha)] = sign * eig.eigenvectors[(i, col)];
        }
    }
    energies[0] = 0.0;
    ExcitonBasis {
        energies,
        eigenvectors: vectors,
        energy_shift: shift,
    }
}

/// For each exciton, the sites (1-based) whose weight |<j|alpha>|^2 meets
/// `weight_threshold`, sorted by descending weight.
pub fn dominant_overlaps(basis: &ExcitonBasis, weight_threshold: f64) -> Vec<Vec<usize>> {
    assert!(
        weight_threshold > 0.0 && weight_threshold < 1.0,
        "weight threshold must lie in (0, 1)"
    );
    let n = basis.n_excitons();
    (0..n)
        .map(|alpha| {
            let mut weighted: Vec<(usize, f64)> = (1..=n)
                .map(|site| (site, basis.site_weight(alpha, site)))
                .filter(|&(_, w)| w >= weight_threshold)
                .collect();
            weighted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            weighted.into_iter().map(|(site, _)| site).collect()
        })
        .collect()
}
