//! Effective cubic-lattice walk on spinors.
//!
//! A `SpinorField` stores `comps` complex components per site of a periodic
//! grid, site-major with z fastest and components innermost. Shifts use the
//! pull convention: a component with sign s along axis u takes its new value at
//! k from k + s·u.

use rayon::prelude::*;

use crate::algebra::{block_diag, CoinSet, Matrix, C64, ZERO};
use crate::error::{Result, WalkError};
use crate::lattice::{class_index, grid_index, Lattice};
use crate::tetra_engine::{max_abs_diff, robust_site_amps, RobustTetraField, TetraField};
use crate::Axis;

/// Where the mass coin enters the step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Massless,
    /// M in every substep; continuum mass 3m.
    PerSubstep,
    /// M once per full step, after the three substeps; continuum mass m.
    Single,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Massless => "massless",
            Variant::PerSubstep => "massive_per_substep",
            Variant::Single => "massive_single",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "massless" => Some(Variant::Massless),
            "massive_per_substep" | "per_substep" => Some(Variant::PerSubstep),
            "massive_single" | "single" => Some(Variant::Single),
            _ => None,
        }
    }

    /// Factor between walk mass and continuum mass.
    pub fn mass_multiplier(self) -> f64 {
        match self {
            Variant::Massless | Variant::PerSubstep => 3.0,
            Variant::Single => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Dirac4,
    WeylFirst,
    WeylMirror,
    /// Spinor form of the robust tetra walk: first walker in components 0, 1,
    /// mirror walker in 2, 3. Equals the gathered tetra walk for the massless
    /// and single-mass variants only; between substeps the two walkers sit on
    /// different gather sites, so a per-substep M here is not the tetra one.
    Robust4,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Dirac4 => "dirac4",
            Mode::WeylFirst => "weyl_first",
            Mode::WeylMirror => "weyl_mirror",
            Mode::Robust4 => "robust4",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "dirac4" => Some(Mode::Dirac4),
            "weyl_first" => Some(Mode::WeylFirst),
            "weyl_mirror" => Some(Mode::WeylMirror),
            "robust4" => Some(Mode::Robust4),
            _ => None,
        }
    }

    pub fn components(self) -> usize {
        match self {
            Mode::WeylFirst | Mode::WeylMirror => 2,
            Mode::Dirac4 | Mode::Robust4 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkParams {
    pub mass: f64,
    pub eps: f64,
    pub variant: Variant,
    pub mode: Mode,
    pub start_axis: Axis,
}

impl WalkParams {
    pub fn new(mass: f64, eps: f64, variant: Variant, mode: Mode) -> WalkParams {
        WalkParams {
            mass,
            eps,
            variant,
            mode,
            start_axis: Axis::Z,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass.is_finite() && self.mass >= 0.0) {
            return Err(WalkError::InvalidArgument(format!("mass {} must be >= 0", self.mass)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(WalkError::InvalidArgument(format!("eps {} must be > 0", self.eps)));
        }
        let weyl = matches!(self.mode, Mode::WeylFirst | Mode::WeylMirror);
        if weyl && self.variant != Variant::Massless {
            return Err(WalkError::InvalidArgument(format!(
                "variant {} needs mode dirac4 or robust4",
                self.variant.name()
            )));
        }
        Ok(())
    }

    pub fn coins(&self) -> Result<CoinSet> {
        let mass = if self.variant == Variant::Massless { 0.0 } else { self.mass };
        CoinSet::new(mass, self.eps)
    }

    /// Axis of substep `phase` for the first walker: start, then cycled.
    pub fn axis(&self, phase: u8) -> Axis {
        let mut a = self.start_axis;
        for _ in 0..phase % 3 {
            a = crate::lattice::cycle_axis(a);
        }
        a
    }

    /// Axis of substep `phase` for walkers running the cycle backwards.
    pub fn reverse_axis(&self, phase: u8) -> Axis {
        self.axis((3 - phase % 3) % 3)
    }

    /// Mirror-walker axis in robust mode: first-walker sequence read backwards.
    pub fn mirror_axis(&self, phase: u8) -> Axis {
        self.axis(2 - phase % 3)
    }
}

/// Dense periodic spinor field.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinorField {
    pub dims: [usize; 3],
    pub eps: f64,
    pub comps: usize,
    pub data: Vec<C64>,
    pub phase: u8,
}

impl SpinorField {
    pub fn zeros(dims: [usize; 3], eps: f64, comps: usize) -> SpinorField {
        SpinorField {
            dims,
            eps,
            comps,
            data: vec![ZERO; dims.iter().product::<usize>() * comps],
            phase: 0,
        }
    }

    pub fn sites(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn site_index(&self, q: [i64; 3]) -> usize {
        grid_index(self.dims, q)
    }

    pub fn site_coords(&self, idx: usize) -> [i64; 3] {
        let z = idx % self.dims[2];
        let y = (idx / self.dims[2]) % self.dims[1];
        let x = idx / (self.dims[1] * self.dims[2]);
        [x as i64, y as i64, z as i64]
    }

    pub fn get(&self, q: [i64; 3], c: usize) -> C64 {
        self.data[self.site_index(q) * self.comps + c]
    }

    pub fn set(&mut self, q: [i64; 3], c: usize, v: C64) {
        let i = self.site_index(q) * self.comps + c;
        self.data[i] = v;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &SpinorField) -> f64 {
        max_abs_diff(&self.data, &other.data)
    }

    /// (τ_a Ψ)(k) = Ψ(k − a).
    pub fn translated(&self, a: [i64; 3]) -> SpinorField {
        let mut out = self.clone();
        for idx in 0..self.sites() {
            let q = self.site_coords(idx);
            let src = self.site_index([q[0] - a[0], q[1] - a[1], q[2] - a[2]]);
            out.data[idx * self.comps..(idx + 1) * self.comps]
                .copy_from_slice(&self.data[src * self.comps..(src + 1) * self.comps]);
        }
        out
    }

    fn check_comps(&self, n: usize) -> Result<()> {
        if self.comps != n {
            return Err(WalkError::InvalidArgument(format!(
                "field has {} components, operation needs {n}",
                self.comps
            )));
        }
        Ok(())
    }
}

/// Per-component shift: new[k][c] = old[k + sign_c·u_c][c], then `u` applied
/// per site when given.
fn shift_apply<const N: usize>(
    field: &SpinorField,
    shifts: [(Axis, i64); N],
    u: Option<&Matrix<N>>,
) -> SpinorField {
    let dims = field.dims;
    let stride = [dims[1] * dims[2], dims[2], 1];
    let offsets: [[usize; 3]; N] = shifts.map(|(axis, s)| {
        let mut o = [0usize; 3];
        o[axis.index()] = s.rem_euclid(dims[axis.index()] as i64) as usize;
        o
    });
    let mut out = field.clone();
    out.data
        .par_chunks_mut(N * stride[0])
        .enumerate()
        .for_each(|(x, slab)| {
            for y in 0..dims[1] {
                for z in 0..dims[2] {
                    let mut v = [ZERO; N];
                    for c in 0..N {
                        let o = offsets[c];
                        let sx = (x + o[0]) % dims[0];
                        let sy = (y + o[1]) % dims[1];
                        let sz = (z + o[2]) % dims[2];
                        v[c] = field.data[N * (sx * stride[0] + sy * stride[1] + sz) + c];
                    }
                    if let Some(u) = u {
                        v = u.apply(&v);
                    }
                    let base = N * (y * stride[1] + z);
                    slab[base..base + N].copy_from_slice(&v);
                }
            }
        });
    out
}

fn apply_site<const N: usize>(field: &SpinorField, u: &Matrix<N>) -> SpinorField {
    let mut out = field.clone();
    out.data.par_chunks_mut(N).for_each(|site| {
        let v: [C64; N] = std::array::from_fn(|c| site[c]);
        site.copy_from_slice(&u.apply(&v));
    });
    out
}

/// ψ↑(k) ← ψ↑(k + u), ψ↓(k) ← ψ↓(k − u).
pub fn partial_shift(field: &SpinorField, axis: Axis) -> Result<SpinorField> {
    field.check_comps(2)?;
    Ok(shift_apply::<2>(field, [(axis, 1), (axis, -1)], None))
}

/// Component c pulls from k + s_c·u with s = (+, −, −, +).
pub fn partial_shift4(field: &SpinorField, axis: Axis) -> Result<SpinorField> {
    field.check_comps(4)?;
    Ok(shift_apply::<4>(field, [(axis, 1), (axis, -1), (axis, -1), (axis, 1)], None))
}

/// One substep of the selected mode, advancing the phase.
pub fn substep(field: &SpinorField, params: &WalkParams, coins: &CoinSet) -> Result<SpinorField> {
    let p = field.phase;
    let mut out = match params.mode {
        Mode::Dirac4 => {
            field.check_comps(4)?;
            let a = params.axis(p);
            let coin = if params.variant == Variant::PerSubstep {
                coins.c_hat.dagger() * coins.m
            } else {
                coins.c_hat.dagger()
            };
            shift_apply::<4>(field, [(a, 1), (a, -1), (a, -1), (a, 1)], Some(&coin))
        }
        Mode::WeylFirst => {
            field.check_comps(2)?;
            let a = params.axis(p);
            shift_apply::<2>(field, [(a, 1), (a, -1)], Some(&coins.c.dagger()))
        }
        Mode::WeylMirror => {
            field.check_comps(2)?;
            let a = params.reverse_axis(p);
            shift_apply::<2>(field, [(a, -1), (a, 1)], Some(&coins.c))
        }
        Mode::Robust4 => {
            field.check_comps(4)?;
            let massed = if params.variant == Variant::PerSubstep {
                apply_site::<4>(field, &coins.m)
            } else {
                field.clone()
            };
            let (a, b) = (params.axis(p), params.mirror_axis(p));
            let coin = block_diag(&coins.c.dagger(), &coins.c);
            shift_apply::<4>(&massed, [(a, 1), (a, -1), (b, -1), (b, 1)], Some(&coin))
        }
    };
    out.phase = (p + 1) % 3;
    Ok(out)
}

/// One full step: three substeps, plus the single mass coin when selected.
pub fn step(field: &SpinorField, params: &WalkParams) -> Result<SpinorField> {
    params.validate()?;
    let coins = params.coins()?;
    let mut f = field.clone();
    for _ in 0..3 {
        f = substep(&f, params, &coins)?;
    }
    if params.variant == Variant::Single {
        f = apply_site::<4>(&f, &coins.m);
    }
    Ok(f)
}

/// Ŵ: shift4(z), Ĉ†, shift4(x), Ĉ†, shift4(y), Ĉ† (from the default start).
pub fn step_massless(field: &SpinorField, params: &WalkParams) -> Result<SpinorField> {
    step(
        field,
        &WalkParams {
            variant: Variant::Massless,
            mode: Mode::Dirac4,
            ..*params
        },
    )
}

pub fn step_massive(field: &SpinorField, params: &WalkParams) -> Result<SpinorField> {
    if params.mode != Mode::Dirac4 {
        return Err(WalkError::InvalidArgument("step_massive needs mode dirac4".into()));
    }
    step(field, params)
}

pub fn step_weyl(field: &SpinorField, params: &WalkParams) -> Result<SpinorField> {
    if !matches!(params.mode, Mode::WeylFirst | Mode::WeylMirror) {
        return Err(WalkError::InvalidArgument("step_weyl needs a weyl mode".into()));
    }
    step(field, params)
}

/// Affine maps from tetra site positions to spinor sites, one per sub-walk:
/// s_i = q[perm_i] + offset_i. The sub-walk of a tetra site q at phase p is
/// (class(q) − p) mod 3.
pub const GATHER_TABLE: [([usize; 3], [i64; 3]); 3] = [
    ([0, 1, 2], [0, 0, 0]),
    ([1, 2, 0], [1, 0, 0]),
    ([2, 0, 1], [0, 1, 0]),
];

/// Spinor site holding the block of tetra site `q` at substep phase `phase`.
pub fn gather_site(q: [i64; 3], phase: u8) -> Option<[i64; 3]> {
    let class = class_index(q)?;
    let sub = (class + 3 - (phase as usize % 3)) % 3;
    let (perm, off) = GATHER_TABLE[sub];
    Some([0, 1, 2].map(|i| q[perm[i]] + off[i]))
}

fn require_cubic(lattice: &Lattice) -> Result<()> {
    let d = lattice.dims();
    if d[0] != d[1] || d[1] != d[2] {
        return Err(WalkError::InvalidArgument(format!("gather needs cubic dims, got {d:?}")));
    }
    Ok(())
}

fn gather_blocks(lattice: &Lattice, phase: u8, amps: &[C64], block: impl Fn(usize) -> [usize; 4]) -> Result<SpinorField> {
    require_cubic(lattice)?;
    let mut out = SpinorField::zeros(lattice.dims(), lattice.eps(), 4);
    out.phase = phase;
    for (s, b) in lattice.sites().iter().enumerate() {
        let idx = out.site_index(gather_site(b.pos, phase).unwrap());
        for (c, a) in block(s).into_iter().enumerate() {
            out.data[4 * idx + c] = amps[a];
        }
    }
    Ok(out)
}

fn scatter_blocks(
    spinor: &SpinorField,
    lattice: &Lattice,
    amps: &mut [C64],
    block: impl Fn(usize) -> [usize; 4],
) -> Result<()> {
    require_cubic(lattice)?;
    spinor.check_comps(4)?;
    if spinor.dims != lattice.dims() {
        return Err(WalkError::InvalidArgument(format!(
            "spinor dims {:?} differ from lattice dims {:?}",
            spinor.dims,
            lattice.dims()
        )));
    }
    let mut covered = vec![false; spinor.sites()];
    for (s, b) in lattice.sites().iter().enumerate() {
        let idx = spinor.site_index(gather_site(b.pos, spinor.phase).unwrap());
        covered[idx] = true;
        for (c, a) in block(s).into_iter().enumerate() {
            amps[a] = spinor.data[4 * idx + c];
        }
    }
    for (idx, cov) in covered.iter().enumerate() {
        if !cov && spinor.data[4 * idx..4 * idx + 4].iter().any(|v| *v != ZERO) {
            return Err(WalkError::InvalidArgument(format!(
                "spinor site {:?} has no tetrahedral counterpart but carries amplitude",
                spinor.site_coords(idx)
            )));
        }
    }
    Ok(())
}

/// Site blocks (RH, LH, LH companion, RH companion) placed by `GATHER_TABLE`.
pub fn gather(tetra: &TetraField, lattice: &Lattice) -> Result<SpinorField> {
    if tetra.amps.len() != lattice.amp_count() {
        return Err(WalkError::InvalidArgument("tetra field does not match lattice".into()));
    }
    gather_blocks(lattice, tetra.phase, &tetra.amps, |s| lattice.sites()[s].spinor_amps())
}

pub fn scatter(spinor: &SpinorField, lattice: &Lattice) -> Result<TetraField> {
    let mut out = TetraField::zeros(lattice);
    out.phase = spinor.phase;
    scatter_blocks(spinor, lattice, &mut out.amps, |s| lattice.sites()[s].spinor_amps())?;
    Ok(out)
}

/// Robust blocks (RH up, LH down, RH down, LH up); ancillas are dropped.
pub fn gather_robust(tetra: &RobustTetraField, lattice: &Lattice) -> Result<SpinorField> {
    if tetra.amps.len() != 2 * lattice.amp_count() {
        return Err(WalkError::InvalidArgument("robust field does not match lattice".into()));
    }
    gather_blocks(lattice, tetra.phase, &tetra.amps, |s| robust_site_amps(&lattice.sites()[s]))
}

/// Inverse of `gather_robust`, with zero ancillas.
pub fn scatter_robust(spinor: &SpinorField, lattice: &Lattice) -> Result<RobustTetraField> {
    let mut out = RobustTetraField::zeros(lattice);
    out.phase = spinor.phase;
    scatter_blocks(spinor, lattice, &mut out.amps, |s| robust_site_amps(&lattice.sites()[s]))?;
    Ok(out)
}
