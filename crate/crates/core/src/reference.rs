//! Exact continuum reference and the numerical arbiters: Dirac Hamiltonian
//! symbol, spectral evolution on the periodic box, per-momentum walk symbols,
//! dispersion scans and convergence studies.
//!
//! Fourier convention: forward transform with e^{−ik·x}, wavevectors
//! k = 2πn/(Lε) with n in the symmetric range [−L/2, L/2). The continuum
//! operator reached by the walk is (multiplier·m)γ⁰ + iα·∇, whose symbol on
//! e^{ik·x} is H(−k) with H(p) = (multiplier·m)γ⁰ + α·p.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix4};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::algebra::{alphas, block_diag, coin_c, coin_c_hat, gamma0, mass_coin, pauli, Complex2Matrix, Complex4Matrix, Matrix, C64, I, ONE, ZERO};
use crate::error::{Result, WalkError};
use crate::spinor_model::{step, Mode, SpinorField, Variant, WalkParams};
use crate::Axis;

/// H(p) = (multiplier·m)·γ⁰ + Σ_j α^j p_j.
pub fn hamiltonian_symbol(p: [f64; 3], mass_multiplier: f64, m: f64) -> Complex4Matrix {
    let a = alphas();
    let mut h = gamma0().scale(C64::from(mass_multiplier * m));
    for j in 0..3 {
        h = h + a[j].scale(C64::from(p[j]));
    }
    h
}

/// E(p) = sqrt(|p|² + (multiplier·m)²).
pub fn energy(p: [f64; 3], mass_multiplier: f64, m: f64) -> f64 {
    let mm = mass_multiplier * m;
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + mm * mm).sqrt()
}

/// exp(−iT·H) for a Hermitian H with H² = E²·I.
fn propagator<const N: usize>(h: &Matrix<N>, e: f64, t: f64) -> Matrix<N> {
    let (s, c) = (e * t).sin_cos();
    let sinc = if e == 0.0 { t } else { s / e };
    Matrix::<N>::identity().scale(C64::from(c)) - h.scale(I * sinc)
}

/// Weyl symbol σ·p.
fn sigma_dot(p: [f64; 3]) -> Complex2Matrix {
    let mut h = Complex2Matrix::zeros();
    for j in 0..3 {
        h = h + pauli(j + 1).unwrap().scale(C64::from(p[j]));
    }
    h
}

fn wavevector(n: usize, len: usize, eps: f64) -> f64 {
    let half = len / 2;
    let signed = if n >= half { n as i64 - len as i64 } else { n as i64 };
    2.0 * PI * signed as f64 / (len as f64 * eps)
}

/// In-place 3D DFT of every component.
fn fft3(field: &mut SpinorField, inverse: bool) {
    let dims = field.dims;
    let comps = field.comps;
    let mut planner = FftPlanner::<f64>::new();
    for axis in 0..3 {
        let len = dims[axis];
        let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let stride = match axis {
            0 => dims[1] * dims[2] * comps,
            1 => dims[2] * comps,
            _ => comps,
        };
        let lines: Vec<usize> = (0..field.data.len())
            .filter(|&i| (i / stride) % len == 0)
            .collect();
        let data = &field.data;
        let transformed: Vec<Vec<C64>> = lines
            .par_iter()
            .map(|&start| {
                let mut buf: Vec<C64> = (0..len).map(|k| data[start + k * stride]).collect();
                fft.process(&mut buf);
                buf
            })
            .collect();
        for (&start, buf) in lines.iter().zip(transformed) {
            for (k, v) in buf.into_iter().enumerate() {
                field.data[start + k * stride] = v;
            }
        }
    }
    if inverse {
        let scale = 1.0 / field.sites() as f64;
        field.data.par_iter_mut().for_each(|v| *v *= scale);
    }
}

fn apply_per_mode<const N: usize>(field: &SpinorField, op: impl Fn([f64; 3]) -> Matrix<N> + Sync) -> SpinorField {
    let mut f = field.clone();
    fft3(&mut f, false);
    let dims = f.dims;
    let eps = f.eps;
    f.data.par_chunks_mut(N).enumerate().for_each(|(idx, site)| {
        let z = idx % dims[2];
        let y = (idx / dims[2]) % dims[1];
        let x = idx / (dims[1] * dims[2]);
        let k = [wavevector(x, dims[0], eps), wavevector(y, dims[1], eps), wavevector(z, dims[2], eps)];
        let v: [C64; N] = std::array::from_fn(|c| site[c]);
        site.copy_from_slice(&op(k).apply(&v));
    });
    fft3(&mut f, true);
    f
}

/// Exact evolution of the Dirac continuum limit for time `t`.
pub fn spectral_evolve(field: &SpinorField, t: f64, m: f64, mass_multiplier: f64) -> Result<SpinorField> {
    if field.comps != 4 {
        return Err(WalkError::InvalidArgument("spectral_evolve needs a 4-component field".into()));
    }
    Ok(apply_per_mode::<4>(field, |k| {
        let p = k.map(|v| -v);
        propagator(&hamiltonian_symbol(p, mass_multiplier, m), energy(p, mass_multiplier, m), t)
    }))
}

/// Exact evolution of ∂₀ψ = ±Σσ_j∂_jψ (+ for the first walker).
pub fn spectral_evolve_weyl(field: &SpinorField, t: f64, mirror: bool) -> Result<SpinorField> {
    if field.comps != 2 {
        return Err(WalkError::InvalidArgument("spectral_evolve_weyl needs a 2-component field".into()));
    }
    let sign = if mirror { 1.0 } else { -1.0 };
    Ok(apply_per_mode::<2>(field, |k| {
        let p = k.map(|v| sign * v);
        propagator(&sigma_dot(p), energy(p, 0.0, 0.0), t)
    }))
}

/// Per-momentum transfer matrix of one full step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WalkSymbol {
    Spinor4(Complex4Matrix),
    Weyl2(Complex2Matrix),
}

impl WalkSymbol {
    pub fn unitarity_defect(&self) -> f64 {
        match self {
            WalkSymbol::Spinor4(m) => m.unitarity_defect(),
            WalkSymbol::Weyl2(m) => m.unitarity_defect(),
        }
    }

    pub fn determinant(&self) -> C64 {
        match self {
            WalkSymbol::Spinor4(m) => m.determinant(),
            WalkSymbol::Weyl2(m) => m.determinant(),
        }
    }

    /// Eigenphases in (−π, π], sorted ascending.
    pub fn eigenphases(&self) -> Vec<f64> {
        let vals: Vec<C64> = match self {
            WalkSymbol::Spinor4(m) => {
                let a = Matrix4::from_fn(|i, j| m.0[i][j]);
                a.schur().eigenvalues().expect("complex Schur form is triangular").iter().copied().collect()
            }
            WalkSymbol::Weyl2(m) => {
                let a = Matrix2::from_fn(|i, j| m.0[i][j]);
                a.schur().eigenvalues().expect("complex Schur form is triangular").iter().copied().collect()
            }
        };
        let mut phases: Vec<f64> = vals.iter().map(|z| z.arg()).collect();
        phases.sort_by(f64::total_cmp);
        phases
    }
}

fn phase_diag<const N: usize>(phases: [f64; N]) -> Matrix<N> {
    Matrix::diag(phases.map(|t| C64::from_polar(1.0, t)))
}

/// Assembles the one-step symbol from shift phases e^{iεp·s} and coin
/// matrices in the substep order of `params`, starting at phase 0.
pub fn walk_symbol(p: [f64; 3], params: &WalkParams) -> Result<WalkSymbol> {
    params.validate()?;
    let eps = params.eps;
    let mass = if params.variant == Variant::Massless { 0.0 } else { params.mass };
    let m = mass_coin(mass, eps)?;
    let per_substep = params.variant == Variant::PerSubstep;
    let pa = |a: Axis| eps * p[a.index()];
    Ok(match params.mode {
        Mode::Dirac4 => {
            let ch = coin_c_hat().dagger();
            let mut w = Complex4Matrix::identity();
            for ph in 0..3 {
                let t = pa(params.axis(ph));
                let d = phase_diag([t, -t, -t, t]);
                let u = if per_substep { ch * m * d } else { ch * d };
                w = u * w;
            }
            if params.variant == Variant::Single {
                w = m * w;
            }
            WalkSymbol::Spinor4(w)
        }
        Mode::WeylFirst => {
            let c = coin_c().dagger();
            let mut w = Complex2Matrix::identity();
            for ph in 0..3 {
                let t = pa(params.axis(ph));
                w = c * phase_diag([t, -t]) * w;
            }
            WalkSymbol::Weyl2(w)
        }
        Mode::WeylMirror => {
            let c = coin_c();
            let mut w = Complex2Matrix::identity();
            for ph in 0..3 {
                let t = pa(params.reverse_axis(ph));
                w = c * phase_diag([-t, t]) * w;
            }
            WalkSymbol::Weyl2(w)
        }
        Mode::Robust4 => {
            let coin = block_diag(&coin_c().dagger(), &coin_c());
            let mut w = Complex4Matrix::identity();
            for ph in 0..3 {
                let (a, b) = (pa(params.axis(ph)), pa(params.mirror_axis(ph)));
                let d = phase_diag([a, -a, -b, b]);
                let u = if per_substep { coin * d * m } else { coin * d };
                w = u * w;
            }
            if params.variant == Variant::Single {
                w = m * w;
            }
            WalkSymbol::Spinor4(w)
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispersionSample {
    pub p: [f64; 3],
    /// Sorted eigenphases divided by ε.
    pub walk: Vec<f64>,
    pub exact: Vec<f64>,
    pub error: f64,
    pub pairing_defect: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispersionReport {
    pub samples: Vec<DispersionSample>,
    pub max_error: f64,
    pub max_pairing_defect: f64,
    pub eps: f64,
    pub mass: f64,
}

/// Tolerance for the ± pairing of walk eigenphases.
pub const PAIRING_TOL: f64 = 1e-10;

impl DispersionReport {
    pub fn pairing_ok(&self) -> bool {
        self.max_pairing_defect <= PAIRING_TOL
    }

    pub fn to_csv(&self) -> String {
        let n = self.samples.first().map_or(0, |s| s.walk.len());
        let mut out = String::from("px,py,pz");
        for a in 0..n {
            write!(out, ",walk_{a}").unwrap();
        }
        for a in 0..n {
            write!(out, ",exact_{a}").unwrap();
        }
        out.push_str(",error\n");
        for s in &self.samples {
            let mut row: Vec<f64> = s.p.to_vec();
            row.extend(&s.walk);
            row.extend(&s.exact);
            row.push(s.error);
            out.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Compares sorted walk eigenphases ÷ ε against ±E(p) on an n³ grid in
/// [−p_box, p_box]³.
pub fn dispersion_scan(params: &WalkParams, p_box: f64, n: usize) -> Result<DispersionReport> {
    params.validate()?;
    if !(p_box >= 0.0 && p_box <= PI / (2.0 * params.eps)) {
        return Err(WalkError::InvalidArgument(format!(
            "p_box {p_box} outside [0, π/(2ε)]"
        )));
    }
    if n == 0 {
        return Err(WalkError::InvalidArgument("need at least one sample per axis".into()));
    }
    let grid: Vec<f64> = if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| -p_box + 2.0 * p_box * i as f64 / (n - 1) as f64).collect()
    };
    let mass = if params.variant == Variant::Massless { 0.0 } else { params.mass };
    let mult = match params.mode {
        Mode::WeylFirst | Mode::WeylMirror => 0.0,
        _ => params.variant.mass_multiplier(),
    };
    let mut samples = Vec::with_capacity(n * n * n);
    for &px in &grid {
        for &py in &grid {
            for &pz in &grid {
                let p = [px, py, pz];
                let sym = walk_symbol(p, params)?;
                let walk: Vec<f64> = sym.eigenphases().iter().map(|t| t / params.eps).collect();
                let e = energy(p, mult, mass);
                let half = walk.len() / 2;
                let exact: Vec<f64> = (0..walk.len()).map(|a| if a < half { -e } else { e }).collect();
                let error = walk.iter().zip(&exact).map(|(w, x)| (w - x).abs()).fold(0.0, f64::max);
                let k = walk.len();
                let pairing_defect = (0..k)
                    .map(|a| ((walk[a] + walk[k - 1 - a]) * params.eps).abs())
                    .fold(0.0, f64::max);
                samples.push(DispersionSample { p, walk, exact, error, pairing_defect });
            }
        }
    }
    let max_error = samples.iter().map(|s| s.error).fold(0.0, f64::max);
    let max_pairing_defect = samples.iter().map(|s| s.pairing_defect).fold(0.0, f64::max);
    Ok(DispersionReport { samples, max_error, max_pairing_defect, eps: params.eps, mass })
}

/// Shape of an initial state.
#[derive(Clone, Debug, PartialEq)]
pub enum PacketKind {
    /// exp(−|x−c|²/4w²)·exp(ip·x)·χ.
    Gaussian { width: f64 },
    /// exp(ip·x)·χ with p snapped to the nearest grid wavevector.
    Plane,
    /// Unit amplitude in one component at the site nearest the center.
    Delta { component: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct WavePacket {
    pub kind: PacketKind,
    /// Physical center; `None` is the box center.
    pub center: Option<[f64; 3]>,
    pub momentum: [f64; 3],
    pub polarization: Vec<C64>,
}

impl WavePacket {
    pub fn gaussian(width: f64, momentum: [f64; 3], polarization: Vec<C64>) -> WavePacket {
        WavePacket { kind: PacketKind::Gaussian { width }, center: None, momentum, polarization }
    }

    /// Samples the packet on a dims grid of spacing eps, normalized to 1.
    pub fn sample(&self, dims: [usize; 3], eps: f64) -> Result<SpinorField> {
        let comps = self.polarization.len();
        if comps != 2 && comps != 4 {
            return Err(WalkError::InvalidArgument(format!("polarization has {comps} entries, need 2 or 4")));
        }
        let box_len = dims.map(|d| d as f64 * eps);
        let center = self.center.unwrap_or([0, 1, 2].map(|i| box_len[i] / 2.0));
        let mut f = SpinorField::zeros(dims, eps, comps);
        match self.kind {
            PacketKind::Delta { component } => {
                if component >= comps {
                    return Err(WalkError::InvalidArgument(format!("delta component {component} >= {comps}")));
                }
                let q = center.map(|c| (c / eps).round() as i64);
                f.set(q, component, ONE);
                return Ok(f);
            }
            PacketKind::Gaussian { width } if width < eps => {
                return Err(WalkError::InvalidArgument(format!("width {width} smaller than eps {eps}")));
            }
            _ => {}
        }
        let momentum = match self.kind {
            PacketKind::Plane => [0, 1, 2].map(|i| {
                let unit = 2.0 * PI / box_len[i];
                (self.momentum[i] / unit).round() * unit
            }),
            _ => self.momentum,
        };
        let pol_norm: f64 = self.polarization.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if pol_norm == 0.0 {
            return Err(WalkError::InvalidArgument("polarization is zero".into()));
        }
        let kind = self.kind.clone();
        f.data.par_chunks_mut(comps).enumerate().for_each(|(idx, site)| {
            let z = idx % dims[2];
            let y = (idx / dims[2]) % dims[1];
            let x = idx / (dims[1] * dims[2]);
            let pos = [x, y, z].map(|v| v as f64 * eps);
            let phase: f64 = (0..3).map(|i| momentum[i] * pos[i]).sum();
            let env = match kind {
                PacketKind::Gaussian { width } => {
                    let r2: f64 = (0..3).map(|i| (pos[i] - center[i]).powi(2)).sum();
                    (-r2 / (4.0 * width * width)).exp()
                }
                _ => 1.0,
            };
            let amp = C64::from_polar(env, phase);
            for (s, chi) in site.iter_mut().zip(&self.polarization) {
                *s = amp * chi;
            }
        });
        let norm = f.norm();
        f.data.iter_mut().for_each(|v| *v /= norm);
        Ok(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceLevel {
    pub eps: f64,
    pub grid: usize,
    pub steps: usize,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<ConvergenceLevel>,
    /// Least-squares slope of ln(error) against ln(ε); `None` when any error
    /// vanishes.
    pub estimated_order: Option<f64>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,grid,steps,error\n");
        for l in &self.levels {
            writeln!(out, "{},{},{},{}", fmt_f64(l.eps), l.grid, l.steps, fmt_f64(l.error)).unwrap();
        }
        out
    }

    /// error(level i+1) / error(level i).
    pub fn ratios(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| w[1].error / w[0].error).collect()
    }
}

pub fn fit_order(eps: &[f64], err: &[f64]) -> Option<f64> {
    if eps.len() < 2 || err.iter().any(|e| *e <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Exact continuum evolution matching `params`.
pub fn continuum_evolve(field: &SpinorField, t: f64, params: &WalkParams) -> Result<SpinorField> {
    let mass = if params.variant == Variant::Massless { 0.0 } else { params.mass };
    match params.mode {
        Mode::Dirac4 => spectral_evolve(field, t, mass, params.variant.mass_multiplier()),
        Mode::Robust4 if mass == 0.0 => spectral_evolve(field, t, 0.0, 3.0),
        Mode::Robust4 => Err(WalkError::UnsupportedConfiguration(
            "robust4 with mass has no closed-form continuum reference".into(),
        )),
        Mode::WeylFirst => spectral_evolve_weyl(field, t, false),
        Mode::WeylMirror => spectral_evolve_weyl(field, t, true),
    }
}

/// Walk vs exact evolution at each (ε, grid) level for physical time `t`.
pub fn convergence_study(
    initial: &WavePacket,
    t: f64,
    levels: &[(f64, usize)],
    params: &WalkParams,
) -> Result<ConvergenceReport> {
    if levels.is_empty() {
        return Err(WalkError::InvalidArgument("no levels".into()));
    }
    let box_len = levels[0].0 * levels[0].1 as f64;
    for w in levels.windows(2) {
        if w[1].0 >= w[0].0 {
            return Err(WalkError::InvalidArgument("levels must have decreasing eps".into()));
        }
    }
    let mut out = Vec::with_capacity(levels.len());
    for &(eps, grid) in levels {
        if ((eps * grid as f64 - box_len) / box_len).abs() > 1e-12 {
            return Err(WalkError::InvalidArgument("grid·eps must be constant across levels".into()));
        }
        let steps_f = t / eps;
        let steps = steps_f.round();
        if (steps_f - steps).abs() > 1e-9 * steps_f.max(1.0) {
            return Err(WalkError::InvalidArgument(format!("time {t} is not a multiple of eps {eps}")));
        }
        let level_params = WalkParams { eps, ..*params };
        let psi0 = initial.sample([grid; 3], eps)?;
        let mut walk = psi0.clone();
        for _ in 0..steps as usize {
            walk = step(&walk, &level_params)?;
        }
        let exact = continuum_evolve(&psi0, t, &level_params)?;
        let diff: f64 = walk.data.iter().zip(&exact.data).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        out.push(ConvergenceLevel { eps, grid, steps: steps as usize, error: diff / exact.norm() });
    }
    let eps: Vec<f64> = out.iter().map(|l| l.eps).collect();
    let err: Vec<f64> = out.iter().map(|l| l.error).collect();
    Ok(ConvergenceReport { estimated_order: fit_order(&eps, &err), levels: out })
}

/// Transfer matrix measured by evolving plane waves through the lattice step.
pub fn measured_symbol(p_index: [usize; 3], dims: [usize; 3], params: &WalkParams) -> Result<WalkSymbol> {
    let comps = params.mode.components();
    let k = [0, 1, 2].map(|i| wavevector(p_index[i], dims[i], params.eps));
    let mut cols = Vec::with_capacity(comps);
    for c in 0..comps {
        let mut pol = vec![ZERO; comps];
        pol[c] = ONE;
        let packet = WavePacket { kind: PacketKind::Plane, center: None, momentum: k, polarization: pol };
        let psi = packet.sample(dims, params.eps)?;
        let out = step(&psi, params)?;
        let origin = psi.site_index([0, 0, 0]);
        let amp0 = psi.data[origin * comps + c];
        cols.push((0..comps).map(|r| out.data[origin * comps + r] / amp0).collect::<Vec<_>>());
    }
    Ok(match comps {
        4 => WalkSymbol::Spinor4(Matrix(std::array::from_fn(|r| std::array::from_fn(|c| cols[c][r])))),
        _ => WalkSymbol::Weyl2(Matrix(std::array::from_fn(|r| std::array::from_fn(|c| cols[c][r])))),
    })
}

pub fn grid_wavevector(p_index: [usize; 3], dims: [usize; 3], eps: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| wavevector(p_index[i], dims[i], eps))
}
