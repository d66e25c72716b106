//! Uniform mesh on the normalized coordinate `eta = r / R(t)` and the
//! moving-boundary radius updates.
//!
//! The unit interval `[0, 1]` is divided into `n_eta` uniform intervals.
//! Nodes are indexed `0..=n_eta`; interval `i` spans nodes `[i, i+1]` and
//! has center `eta = (i + 1/2) * d_eta`. The chemoattractant mesh extends
//! the same spacing beyond `eta = 1` with `n_ext` extra intervals so that
//! far-field conditions can be imposed at `eta_max`.

use crate::error::SolverError;

/// Immutable description of the normalized mesh.
#[derive(Debug, Clone)]
pub struct Grid {
    n_eta: usize,
    n_ext: usize,
    d_eta: f64,
    /// `eta_j = j * d_eta`, `j = 0..=n_eta + n_ext`; `nodes[n_eta]` is exactly 1.
    nodes: Vec<f64>,
    /// Interval centers `(i + 1/2) * d_eta`, `i = 0..n_eta + n_ext`.
    centers: Vec<f64>,
    /// `nodes[j]^2`.
    node_sq: Vec<f64>,
    /// `nodes[j]^3`.
    node_cu: Vec<f64>,
    /// `centers[i]^2`.
    center_sq: Vec<f64>,
}

impl Grid {
    /// Builds a mesh with `n_eta` intervals on `[0,1]` and extra intervals
    /// up to `eta = ext_factor` for the chemoattractant.
    ///
    /// `n_eta >= 4` is required by the parabolic reconstruction stencils.
    pub fn build(n_eta: usize, ext_factor: f64) -> Result<Self, SolverError> {
        if n_eta < 4 {
            return Err(SolverError::Grid(format!(
                "n_eta = {n_eta} is below the minimum of 4 required by the reconstruction stencils"
            )));
        }
        if !ext_factor.is_finite() || ext_factor < 1.0 {
            return Err(SolverError::Grid(format!(
                "ext_factor = {ext_factor} must be finite and >= 1"
            )));
        }
        let d_eta = 1.0 / n_eta as f64;
        let n_ext = ((ext_factor - 1.0) * n_eta as f64).ceil() as usize;
        let n_tot = n_eta + n_ext;

        let mut nodes: Vec<f64> = (0..=n_tot).map(|j| j as f64 * d_eta).collect();
        // Pin the boundary node so the flux identities at eta = 1 hold exactly.
        nodes[n_eta] = 1.0;
        let centers: Vec<f64> = (0..n_tot).map(|i| (nodes[i] + nodes[i + 1]) / 2.0).collect();
        let node_sq = nodes.iter().map(|e| e * e).collect();
        let node_cu = nodes.iter().map(|e| e * e * e).collect();
        let center_sq = centers.iter().map(|e| e * e).collect();

        Ok(Self { n_eta, n_ext, d_eta, nodes, centers, node_sq, node_cu, center_sq })
    }

    /// Number of intervals on the physical domain `[0, 1]`.
    #[inline]
    pub fn n_eta(&self) -> usize {
        self.n_eta
    }

    /// Extra intervals beyond `eta = 1` (chemoattractant only).
    #[inline]
    pub fn n_ext(&self) -> usize {
        self.n_ext
    }

    /// Total interval count of the extended mesh.
    #[inline]
    pub fn n_tot(&self) -> usize {
        self.n_eta + self.n_ext
    }

    #[inline]
    pub fn d_eta(&self) -> f64 {
        self.d_eta
    }

    /// Outer edge of the extended mesh, `(n_eta + n_ext) * d_eta`.
    #[inline]
    pub fn eta_max(&self) -> f64 {
        self.nodes[self.n_tot()]
    }

    /// Node coordinates over the extended mesh (`0..=n_tot`).
    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Interval centers over the extended mesh (`0..n_tot`).
    #[inline]
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.centers[i]
    }

    /// `eta_j^2` at node `j`.
    #[inline]
    pub fn node_sq(&self, j: usize) -> f64 {
        self.node_sq[j]
    }

    /// `eta_j^3` at node `j`.
    #[inline]
    pub fn node_cu(&self, j: usize) -> f64 {
        self.node_cu[j]
    }

    /// Squared center of interval `i`.
    #[inline]
    pub fn center_sq(&self, i: usize) -> f64 {
        self.center_sq[i]
    }
}

/// Radius of the moving boundary together with its discrete rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusState {
    /// Current radius `R`.
    pub r: f64,
    /// Discrete rate `R'` used by geometric sources and mesh fluxes.
    pub r_prime: f64,
}

/// Rate rule of the geometry-compatible scheme: `R' = V_N / (1 - d_eta^2/4)`.
///
/// The correction factor makes the cubic-preserving boundary flux telescope
/// exactly against the interior mesh fluxes.
#[inline]
pub fn gcl_rate(v_boundary: f64, d_eta: f64) -> f64 {
    v_boundary / (1.0 - d_eta * d_eta / 4.0)
}

/// Advances the radius so that `(r^2 - r_n^2) / (2 dtau r_n) = r_prime`
/// holds exactly, with `r_prime` given by [`gcl_rate`].
pub fn advance_radius_gcl(
    r_n: f64,
    v_boundary: f64,
    dtau: f64,
    d_eta: f64,
) -> Result<RadiusState, SolverError> {
    let r_prime = gcl_rate(v_boundary, d_eta);
    let r_sq = r_n * r_n + 2.0 * dtau * r_prime * r_n;
    if !(r_sq > 0.0) {
        return Err(SolverError::DomainCollapse { r_sq });
    }
    Ok(RadiusState { r: r_sq.sqrt(), r_prime })
}

/// Conventional explicit radius update `R^{n+1} = R^n + dtau V_N`.
pub fn advance_radius_conventional(
    r_n: f64,
    v_boundary: f64,
    dtau: f64,
) -> Result<RadiusState, SolverError> {
    let r = r_n + dtau * v_boundary;
    if !(r > 0.0) {
        return Err(SolverError::DomainCollapse { r_sq: r * r.abs() });
    }
    Ok(RadiusState { r, r_prime: v_boundary })
}

/// Discrete rate consistent with the implicit geometry identity,
/// `R'^{n+1} = (r_{n+1}^2 - r_n^2) / (2 dtau r_{n+1})`.
pub fn implicit_radius_relation(r_n: f64, r_np1: f64, dtau: f64) -> Result<f64, SolverError> {
    if dtau == 0.0 {
        return Err(SolverError::Grid("implicit radius relation needs dtau != 0".into()));
    }
    Ok((r_np1 * r_np1 - r_n * r_n) / (2.0 * dtau * r_np1))
}

/// Inverse of [`implicit_radius_relation`]: the radius whose implicit rate
/// equals `r_prime`, i.e. the positive root of `r^2 - 2 dtau r_prime r - r_n^2`.
pub fn advance_radius_implicit(
    r_n: f64,
    r_prime: f64,
    dtau: f64,
) -> Result<f64, SolverError> {
    let a = dtau * r_prime;
    let disc = a * a + r_n * r_n;
    let r = a + disc.sqrt();
    if !(r > 0.0) {
        return Err(SolverError::DomainCollapse { r_sq: disc });
    }
    Ok(r)
}
