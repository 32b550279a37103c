use std::sync::Arc;

use rayon::prelude::*;

use super::graph::RadialGraph;
use super::grid::{GridMode, RoundGrid};
use crate::error::{Error, Result};
use crate::special::unit_sphere_area;
use crate::symfun::{elementary_symmetric, Spectrum};

/// Grids at least this large are evaluated with a parallel map.
const PAR_THRESHOLD: usize = 4096;

pub(crate) fn par_map<T: Send>(len: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if len >= PAR_THRESHOLD {
        (0..len).into_par_iter().map(f).collect()
    } else {
        (0..len).map(f).collect()
    }
}

/// First and covariant second derivatives of a scalar field at a node, in the
/// orthonormal frame `(d_theta, d_phi / sin theta)` of the round metric.
///
/// For axisymmetric grids the second slot of the gradient is zero and
/// `hess[2]` holds the (repeated) orbit entry `cot(theta) f'`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct FrameDerivs {
    pub grad: [f64; 2],
    pub hess: [f64; 3],
}

/// Centred second-order difference operators on a [`RoundGrid`].
///
/// Longitude differences use `sin(dphi)` and `2 (1 - cos dphi)` in place of
/// `dphi` and `dphi^2`: still second order, but exact on the first Fourier
/// mode so the `1 / sin theta` factors near the poles stay bounded.
pub(crate) struct Stencil<'a> {
    grid: &'a RoundGrid,
    inv_2dt: f64,
    inv_dt2: f64,
    inv_2dp: f64,
    inv_dp2: f64,
}

impl<'a> Stencil<'a> {
    pub fn new(grid: &'a RoundGrid) -> Self {
        let dt = grid.dtheta();
        let dp = grid.dphi();
        let half = (0.5 * dp).sin();
        Self {
            grid,
            inv_2dt: 0.5 / dt,
            inv_dt2: 1.0 / (dt * dt),
            inv_2dp: 0.5 / dp.sin(),
            inv_dp2: 1.0 / (4.0 * half * half),
        }
    }

    pub fn derivs(&self, f: &[f64], node: usize) -> FrameDerivs {
        let g = self.grid;
        let np = g.n_phi();
        let (i, j) = ((node / np) as isize, (node % np) as isize);
        let theta = g.theta()[i as usize];
        let (s, c) = theta.sin_cos();
        let cot = c / s;
        let fc = f[node];
        let fnn = f[g.wrap(i + 1, j)];
        let fs = f[g.wrap(i - 1, j)];
        let ft = (fnn - fs) * self.inv_2dt;
        let ftt = (fnn - 2.0 * fc + fs) * self.inv_dt2;
        match g.mode() {
            GridMode::Axisym => FrameDerivs {
                grad: [ft, 0.0],
                hess: [ftt, 0.0, cot * ft],
            },
            GridMode::Full2d => {
                let fe = f[g.wrap(i, j + 1)];
                let fw = f[g.wrap(i, j - 1)];
                let fne = f[g.wrap(i + 1, j + 1)];
                let fnw = f[g.wrap(i + 1, j - 1)];
                let fse = f[g.wrap(i - 1, j + 1)];
                let fsw = f[g.wrap(i - 1, j - 1)];
                let fp = (fe - fw) * self.inv_2dp;
                let fpp = (fe - 2.0 * fc + fw) * self.inv_dp2;
                let ftp = (fne - fnw - fse + fsw) * self.inv_2dt * self.inv_2dp;
                FrameDerivs {
                    grad: [ft, fp / s],
                    hess: [ftt, (ftp - cot * fp) / s, fpp / (s * s) + cot * ft],
                }
            }
        }
    }

    pub fn gradient(&self, f: &[f64], node: usize) -> [f64; 2] {
        self.derivs(f, node).grad
    }
}

/// Pointwise geometry of one node.
#[derive(Debug, Clone, Copy)]
struct NodeGeometry {
    phi: f64,
    phi_prime: f64,
    w: f64,
    grad: [f64; 2],
    /// Second fundamental form in the round frame (h11, h12, h22).
    h: [f64; 3],
    /// full2d: ascending eigenvalues; axisym: (profile, orbit).
    principal: [f64; 2],
}

fn node_geometry(mode: GridMode, node: usize, rho: f64, d: &FrameDerivs) -> Result<NodeGeometry> {
    let (phi, phi_prime) = rho.sin_cos();
    let [p1, p2] = d.grad;
    let w = (phi * phi + p1 * p1 + p2 * p2).sqrt();
    if !(w.is_finite() && phi > 0.0 && d.hess.iter().all(|x| x.is_finite())) {
        return Err(Error::Geometry {
            node,
            reason: format!("non-finite derivatives (rho = {rho}, |grad| = {})", (w * w - phi * phi).max(0.0).sqrt()),
        });
    }
    let a = phi * phi * phi_prime;
    let h = [
        (a + 2.0 * phi_prime * p1 * p1 - phi * d.hess[0]) / w,
        (2.0 * phi_prime * p1 * p2 - phi * d.hess[1]) / w,
        (a + 2.0 * phi_prime * p2 * p2 - phi * d.hess[2]) / w,
    ];
    let g = [phi * phi + p1 * p1, p1 * p2, phi * phi + p2 * p2];
    let principal = match mode {
        GridMode::Axisym => [h[0] / g[0], h[2] / g[2]],
        GridMode::Full2d => {
            // congruence with the inverse Cholesky factor of g
            let l11 = g[0].sqrt();
            let l21 = g[1] / l11;
            let l22sq = g[2] - l21 * l21;
            if l22sq.is_nan() || l22sq <= 0.0 {
                return Err(Error::Geometry {
                    node,
                    reason: "induced metric not positive definite".into(),
                });
            }
            let l22 = l22sq.sqrt();
            let (ia, ib, ic) = (1.0 / l11, -l21 / (l11 * l22), 1.0 / l22);
            let s00 = ia * ia * h[0];
            let s01 = ia * (ib * h[0] + ic * h[1]);
            let s11 = ib * ib * h[0] + 2.0 * ib * ic * h[1] + ic * ic * h[2];
            let mid = 0.5 * (s00 + s11);
            let rad = (0.5 * (s00 - s11)).hypot(s01);
            [mid - rad, mid + rad]
        }
    };
    if !principal.iter().all(|k| k.is_finite()) {
        return Err(Error::Geometry {
            node,
            reason: "non-finite principal curvature".into(),
        });
    }
    Ok(NodeGeometry {
        phi,
        phi_prime,
        w,
        grad: d.grad,
        h,
        principal,
    })
}

/// Per-node geometry of a radial graph, computed with respect to the outward
/// normal.
#[derive(Debug, Clone)]
pub struct GeometryFields {
    grid: Arc<RoundGrid>,
    rho: Vec<f64>,
    phi: Vec<f64>,
    phi_prime: Vec<f64>,
    grad: Vec<[f64; 2]>,
    grad_norm: Vec<f64>,
    v: Vec<f64>,
    u: Vec<f64>,
    h: Vec<[f64; 3]>,
    principal: Vec<[f64; 2]>,
    sigma: Vec<f64>,
    dmu: Vec<f64>,
}

pub fn compute_geometry(graph: &RadialGraph) -> Result<GeometryFields> {
    let grid = graph.grid().clone();
    let n = grid.n();
    let rho = graph.rho();
    let stencil = Stencil::new(&grid);
    let nodes = par_map(grid.len(), |node| {
        node_geometry(grid.mode(), node, rho[node], &stencil.derivs(rho, node))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let len = nodes.len();
    let mut out = GeometryFields {
        grid: grid.clone(),
        rho: rho.to_vec(),
        phi: Vec::with_capacity(len),
        phi_prime: Vec::with_capacity(len),
        grad: Vec::with_capacity(len),
        grad_norm: Vec::with_capacity(len),
        v: Vec::with_capacity(len),
        u: Vec::with_capacity(len),
        h: Vec::with_capacity(len),
        principal: Vec::with_capacity(len),
        sigma: vec![0.0; len * (n + 1)],
        dmu: Vec::with_capacity(len),
    };
    let mut kappa = vec![0.0; n];
    for (node, ng) in nodes.iter().enumerate() {
        out.phi.push(ng.phi);
        out.phi_prime.push(ng.phi_prime);
        out.grad.push(ng.grad);
        out.grad_norm.push(ng.grad[0].hypot(ng.grad[1]));
        out.v.push(ng.w / ng.phi);
        out.u.push(ng.phi * ng.phi / ng.w);
        out.h.push(ng.h);
        out.principal.push(ng.principal);
        out.dmu.push(grid.weight(node) * ng.phi.powi(n as i32 - 1) * ng.w);
        expand_principal(grid.mode(), ng.principal, &mut kappa);
        elementary_symmetric(&kappa, &mut out.sigma[node * (n + 1)..(node + 1) * (n + 1)]);
    }
    Ok(out)
}

fn expand_principal(mode: GridMode, p: [f64; 2], out: &mut [f64]) {
    match mode {
        GridMode::Full2d => out.copy_from_slice(&p),
        GridMode::Axisym => {
            out[0] = p[0];
            out[1..].iter_mut().for_each(|k| *k = p[1]);
        }
    }
}

impl GeometryFields {
    pub fn grid(&self) -> &Arc<RoundGrid> {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn phi_prime(&self) -> &[f64] {
        &self.phi_prime
    }

    /// Frame components of the round-metric gradient of `rho`.
    pub fn grad_rho(&self) -> &[[f64; 2]] {
        &self.grad
    }

    pub fn grad_norm(&self) -> &[f64] {
        &self.grad_norm
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn dmu(&self) -> &[f64] {
        &self.dmu
    }

    /// Principal curvatures at a node (length n).
    pub fn kappa(&self, node: usize) -> Vec<f64> {
        let mut k = vec![0.0; self.n()];
        expand_principal(self.grid.mode(), self.principal[node], &mut k);
        k
    }

    pub fn spectrum(&self, node: usize) -> Spectrum {
        Spectrum::new(self.kappa(node)).expect("principal curvatures are finite by construction")
    }

    /// `sigma_0..sigma_n` at a node.
    pub fn sigma(&self, node: usize) -> &[f64] {
        let m = self.n() + 1;
        &self.sigma[node * m..(node + 1) * m]
    }

    /// The field `sigma_k` over all nodes; zero for `k > n`.
    pub fn sigma_field(&self, k: usize) -> Vec<f64> {
        let m = self.n() + 1;
        if k >= m {
            return vec![0.0; self.len()];
        }
        self.sigma.iter().skip(k).step_by(m).copied().collect()
    }

    pub fn min_kappa(&self) -> f64 {
        self.principal
            .iter()
            .flat_map(|p| match self.grid.mode() {
                GridMode::Axisym if self.n() == 1 => [p[0], p[0]],
                _ => *p,
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_kappa(&self) -> f64 {
        self.principal
            .iter()
            .flat_map(|p| match self.grid.mode() {
                GridMode::Axisym if self.n() == 1 => [p[0], p[0]],
                _ => *p,
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `sum field * dmu`, in node order.
pub fn integrate(f: &GeometryFields, field: &[f64]) -> f64 {
    field.iter().zip(&f.dmu).map(|(a, w)| a * w).sum()
}

pub fn area(f: &GeometryFields) -> f64 {
    f.dmu.iter().sum()
}

/// `(k+1) int sigma_{k+1} u - (n-k) int phi' sigma_k`, which vanishes on every
/// closed hypersurface.
pub fn minkowski_residual(f: &GeometryFields, k: usize) -> Result<f64> {
    let (lhs, rhs) = minkowski_sides(f, k)?;
    Ok(lhs - rhs)
}

/// Both sides of the Minkowski identity, `(lhs, rhs)`.
pub fn minkowski_sides(f: &GeometryFields, k: usize) -> Result<(f64, f64)> {
    let n = f.n();
    if k >= n {
        return Err(Error::Domain(format!("Minkowski identity needs 0 <= k <= n-1, got k = {k}, n = {n}")));
    }
    let m = n + 1;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for node in 0..f.len() {
        let s = &f.sigma[node * m..(node + 1) * m];
        lhs += s[k + 1] * f.u[node] * f.dmu[node];
        rhs += s[k] * f.phi_prime[node] * f.dmu[node];
    }
    Ok(((k + 1) as f64 * lhs, (n - k) as f64 * rhs))
}

/// Max over nodes of the induced-metric norm of `grad u - h(grad Phi)` with
/// `Phi = 1 - cos rho`, i.e. of `d_i u - h_il g^lm phi rho_m`.
pub fn support_gradient_residual(f: &GeometryFields) -> f64 {
    let stencil = Stencil::new(&f.grid);
    let res = par_map(f.len(), |node| {
        let du = stencil.gradient(&f.u, node);
        let [p1, p2] = f.grad[node];
        let phi = f.phi[node];
        let g = [phi * phi + p1 * p1, p1 * p2, phi * phi + p2 * p2];
        let det = g[0] * g[2] - g[1] * g[1];
        let gi = [g[2] / det, -g[1] / det, g[0] / det];
        // g^{-1} (phi grad rho)
        let q = [phi * (gi[0] * p1 + gi[1] * p2), phi * (gi[1] * p1 + gi[2] * p2)];
        let h = f.h[node];
        let r = [du[0] - (h[0] * q[0] + h[1] * q[1]), du[1] - (h[1] * q[0] + h[2] * q[1])];
        (r[0] * (gi[0] * r[0] + gi[1] * r[1]) + r[1] * (gi[1] * r[0] + gi[2] * r[1]))
            .max(0.0)
            .sqrt()
    });
    res.into_iter().fold(0.0, f64::max)
}

/// Finite-volume divergence of `phi^n grad(rho) / W` on the round sphere,
/// one value per node (flux sum over the cell divided by its weight).
///
/// Pointwise this equals `(n phi' - u H) phi^{n-1} W`. Fluxes cancel in
/// pairs, so the weighted sum over the grid vanishes to rounding.
pub(crate) fn conformal_flux_divergence(grid: &RoundGrid, rho: &[f64]) -> Vec<f64> {
    let n = grid.n();
    let (nt, np) = (grid.n_theta(), grid.n_phi());
    let (dt, dp) = (grid.dtheta(), grid.dphi());
    let coeff = |r: f64, grad2: f64| {
        let phi = r.sin();
        phi.powi(n as i32) / (phi * phi + grad2).sqrt()
    };
    let stencil = Stencil::new(grid);
    let grads: Vec<[f64; 2]> = par_map(grid.len(), |node| stencil.gradient(rho, node));
    let mut div = vec![0.0; grid.len()];
    // latitude faces between rows i and i + 1; pole faces have zero measure
    for i in 0..nt - 1 {
        let theta = (i + 1) as f64 * dt;
        let (s, measure) = match grid.mode() {
            GridMode::Axisym => (1.0, unit_sphere_area(n - 1) * theta.sin().powi(n as i32 - 1)),
            GridMode::Full2d => (theta.sin(), theta.sin() * dp),
        };
        for j in 0..np {
            let (a, b) = (i * np + j, (i + 1) * np + j);
            let rt = (rho[b] - rho[a]) / dt;
            // grads hold frame components; the longitude one carries 1/sin(theta)
            let rp = 0.5 * (grads[a][1] * grid.theta()[i].sin() + grads[b][1] * grid.theta()[i + 1].sin());
            let g2 = rt * rt + (rp / s).powi(2);
            let flux = measure * coeff(0.5 * (rho[a] + rho[b]), g2) * rt;
            div[a] += flux;
            div[b] -= flux;
        }
    }
    if grid.mode() == GridMode::Full2d {
        for i in 0..nt {
            let s = grid.theta()[i].sin();
            for j in 0..np {
                let (a, b) = (i * np + j, i * np + (j + 1) % np);
                let rp = (rho[b] - rho[a]) / dp;
                let rt = 0.5 * (grads[a][0] + grads[b][0]);
                let g2 = rt * rt + (rp / s).powi(2);
                let flux = dt * coeff(0.5 * (rho[a] + rho[b]), g2) * rp / s;
                div[a] += flux;
                div[b] -= flux;
            }
        }
    }
    for (node, d) in div.iter_mut().enumerate() {
        *d /= grid.weight(node);
    }
    div
}
