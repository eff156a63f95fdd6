//! Walk on tetrahedron-resident amplitudes.
//!
//! Non-robust field: four amplitudes per tetrahedron, one per facet. The
//! blue/red amplitudes form the first walker, cyan/magenta the second. At every
//! non-forbidden site the two walker-1 amplitudes (one RH, one LH) and their
//! same-tetrahedron companions form the site spinor
//! (RH, LH, LH companion, RH companion) on which Ĉ† and M act.
//!
//! Robust field: eight amplitudes per tetrahedron, component j = 2·facet + spin
//! with even j the up component. The first walker is (RH up, LH down), the
//! mirror walker (LH up, RH down); cyan/magenta components are ancillas.

use rayon::prelude::*;

use crate::algebra::{block_diag, Complex2Matrix, Complex4Matrix, C64, ZERO};
use crate::algebra::CoinSet;
use crate::error::{Result, WalkError};
use crate::lattice::{FacetId, FacetRef, Hand, Lattice};
use crate::spinor_model::Variant;

/// Four amplitudes per tetrahedron, tetra-major. `phase` counts substeps mod 3.
#[derive(Clone, Debug, PartialEq)]
pub struct TetraField {
    pub amps: Vec<C64>,
    pub phase: u8,
}

/// Eight amplitudes per tetrahedron, tetra-major.
#[derive(Clone, Debug, PartialEq)]
pub struct RobustTetraField {
    pub amps: Vec<C64>,
    pub phase: u8,
}

fn norm_sq(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

impl TetraField {
    pub fn zeros(lattice: &Lattice) -> TetraField {
        TetraField {
            amps: vec![ZERO; lattice.amp_count()],
            phase: 0,
        }
    }

    pub fn basis(lattice: &Lattice, amp: usize) -> TetraField {
        let mut f = TetraField::zeros(lattice);
        f.amps[amp] = C64::new(1.0, 0.0);
        f
    }

    pub fn get(&self, t: usize, f: FacetId) -> C64 {
        self.amps[4 * t + f.value()]
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.amps).sqrt()
    }

    pub fn max_abs_diff(&self, other: &TetraField) -> f64 {
        max_abs_diff(&self.amps, &other.amps)
    }
}

impl RobustTetraField {
    pub fn zeros(lattice: &Lattice) -> RobustTetraField {
        RobustTetraField {
            amps: vec![ZERO; 2 * lattice.amp_count()],
            phase: 0,
        }
    }

    pub fn norm(&self) -> f64 {
        norm_sq(&self.amps).sqrt()
    }

    pub fn max_abs_diff(&self, other: &RobustTetraField) -> f64 {
        max_abs_diff(&self.amps, &other.amps)
    }
}

pub(crate) fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn require_defect_free(lattice: &Lattice) -> Result<()> {
    if lattice.has_defects() {
        return Err(WalkError::UnsupportedConfiguration(
            "broken links require the robust engine".into(),
        ));
    }
    Ok(())
}

fn check_len(lattice: &Lattice, len: usize, per_tetra: usize) -> Result<()> {
    if len != per_tetra * lattice.tetra_count() {
        return Err(WalkError::InvalidArgument(format!(
            "field has {len} amplitudes, lattice needs {}",
            per_tetra * lattice.tetra_count()
        )));
    }
    Ok(())
}

fn neighbor_tetra(lattice: &Lattice, t: usize, f: FacetId) -> usize {
    lattice.neighbor(t, f).expect("defect-free lattice").tetra
}

fn black_sources(lattice: &Lattice, t: usize) -> [usize; 4] {
    match lattice.hand(t) {
        Hand::Left => {
            let n2 = neighbor_tetra(lattice, t, FacetId::CYAN);
            [4 * n2 + 3, 4 * t, 4 * n2 + 1, 4 * t + 2]
        }
        Hand::Right => {
            let n3 = neighbor_tetra(lattice, t, FacetId::MAGENTA);
            [4 * t + 1, 4 * n3 + 2, 4 * t + 3, 4 * n3]
        }
    }
}

fn grey_sources(hand: Hand, t: usize) -> [usize; 4] {
    match hand {
        Hand::Left => [4 * t + 2, 4 * t + 1, 4 * t, 4 * t + 3],
        Hand::Right => [4 * t, 4 * t + 3, 4 * t + 2, 4 * t + 1],
    }
}

fn grey_source_of(lattice: &Lattice, amp: usize) -> usize {
    grey_sources(lattice.hand(amp / 4), amp / 4)[amp % 4]
}

fn pull(field: &[C64], per_tetra: usize, sources: impl Fn(usize) -> Vec<usize> + Sync) -> Vec<C64> {
    let mut out = vec![ZERO; field.len()];
    out.par_chunks_mut(per_tetra).enumerate().for_each(|(t, o)| {
        for (dst, src) in o.iter_mut().zip(sources(t)) {
            *dst = field[src];
        }
    });
    out
}

/// Causal half of the shift.
pub fn shift_black(lattice: &Lattice, field: &TetraField) -> Result<TetraField> {
    require_defect_free(lattice)?;
    check_len(lattice, field.amps.len(), 4)?;
    Ok(TetraField {
        amps: pull(&field.amps, 4, |t| black_sources(lattice, t).to_vec()),
        phase: field.phase,
    })
}

/// Strictly local half of the shift: LH swaps facets 0↔2, RH swaps 1↔3.
pub fn shift_grey(lattice: &Lattice, field: &TetraField) -> Result<TetraField> {
    check_len(lattice, field.amps.len(), 4)?;
    Ok(TetraField {
        amps: pull(&field.amps, 4, |t| grey_sources(lattice.hand(t), t).to_vec()),
        phase: field.phase,
    })
}

/// S = S_G · S_B.
pub fn shift(lattice: &Lattice, field: &TetraField) -> Result<TetraField> {
    shift_grey(lattice, &shift_black(lattice, field)?)
}

/// Applies `op` to every basis amplitude; `perm[src] = dst`.
pub fn extract_permutation(
    lattice: &Lattice,
    op: impl Fn(&TetraField) -> Result<TetraField>,
) -> Result<Vec<usize>> {
    let n = lattice.amp_count();
    let mut perm = Vec::with_capacity(n);
    let mut hit = vec![false; n];
    for src in 0..n {
        let out = op(&TetraField::basis(lattice, src))?;
        let mut target = None;
        for (i, v) in out.amps.iter().enumerate() {
            if *v == ZERO {
                continue;
            }
            if *v != C64::new(1.0, 0.0) || target.is_some() {
                return Err(WalkError::NotAPermutation { source_index: src });
            }
            target = Some(i);
        }
        let dst = target.ok_or(WalkError::NotAPermutation { source_index: src })?;
        if std::mem::replace(&mut hit[dst], true) {
            return Err(WalkError::NotAPermutation { source_index: src });
        }
        perm.push(dst);
    }
    Ok(perm)
}

/// Multiplies every glued walker-1 pair (RH, LH) by `u`.
pub fn apply_facet_coin(lattice: &Lattice, field: &TetraField, u: &Complex2Matrix) -> Result<TetraField> {
    if (0..lattice.sites().len()).any(|s| !lattice.site_linked(s)) {
        return Err(WalkError::UnsupportedConfiguration("unpaired facet".into()));
    }
    check_len(lattice, field.amps.len(), 4)?;
    let mut out = field.clone();
    for b in lattice.sites() {
        let v = u.apply(&[field.amps[b.rh], field.amps[b.lh]]);
        out.amps[b.rh] = v[0];
        out.amps[b.lh] = v[1];
    }
    Ok(out)
}

fn apply_blocks(amps: &mut [C64], blocks: impl Iterator<Item = [usize; 4]>, u: &Complex4Matrix) {
    for b in blocks {
        let v = u.apply(&b.map(|i| amps[i]));
        for (i, x) in b.into_iter().zip(v) {
            amps[i] = x;
        }
    }
}

/// One substep: black shift, M (per-substep variant) on the site blocks pulled
/// back through the grey swap, grey shift, Ĉ† on site blocks.
pub fn substep_dirac_tetra(
    lattice: &Lattice,
    field: &TetraField,
    coins: &CoinSet,
    variant: Variant,
) -> Result<TetraField> {
    let mut f = shift_black(lattice, field)?;
    if variant == Variant::PerSubstep {
        let pulled = lattice
            .sites()
            .iter()
            .map(|b| b.spinor_amps().map(|a| grey_source_of(lattice, a)));
        apply_blocks(&mut f.amps, pulled, &coins.m);
    }
    let mut f = shift_grey(lattice, &f)?;
    apply_blocks(
        &mut f.amps,
        lattice.sites().iter().map(|b| b.spinor_amps()),
        &coins.c_hat.dagger(),
    );
    f.phase = (f.phase + 1) % 3;
    Ok(f)
}

/// One full step (three substeps). The single-mass variant applies M once
/// after the third substep.
pub fn step_dirac_tetra(
    lattice: &Lattice,
    field: &TetraField,
    coins: &CoinSet,
    variant: Variant,
) -> Result<TetraField> {
    let mut f = field.clone();
    for _ in 0..3 {
        f = substep_dirac_tetra(lattice, &f, coins, variant)?;
    }
    if variant == Variant::Single {
        apply_blocks(&mut f.amps, lattice.sites().iter().map(|b| b.spinor_amps()), &coins.m);
    }
    Ok(f)
}

const S0: [usize; 8] = [5, 2, 1, 6, 4, 0, 3, 7];
const S2: [usize; 8] = [0, 5, 6, 3, 4, 1, 2, 7];

fn reorder(lattice: &Lattice, field: &RobustTetraField, order: &[usize; 8]) -> Result<RobustTetraField> {
    check_len(lattice, field.amps.len(), 8)?;
    Ok(RobustTetraField {
        amps: pull(&field.amps, 8, |t| order.iter().map(|&j| 8 * t + j).collect()),
        phase: field.phase,
    })
}

pub fn robust_shift_0(lattice: &Lattice, field: &RobustTetraField) -> Result<RobustTetraField> {
    reorder(lattice, field, &S0)
}

/// Local swaps 0↔1, 2↔3 and the cross-facet exchanges of component 5 with
/// component 6 of n(k,2). A swap across a broken link is the identity.
pub fn robust_shift_1(lattice: &Lattice, field: &RobustTetraField) -> Result<RobustTetraField> {
    check_len(lattice, field.amps.len(), 8)?;
    let amps = pull(&field.amps, 8, |t| {
        let across = |f: FacetId, j: usize, own: usize| match lattice.neighbor(t, f) {
            Some(FacetRef { tetra, .. }) => 8 * tetra + j,
            None => 8 * t + own,
        };
        vec![
            8 * t + 1,
            8 * t,
            8 * t + 3,
            8 * t + 2,
            8 * t + 4,
            across(FacetId::CYAN, 6, 5),
            across(FacetId::MAGENTA, 5, 6),
            8 * t + 7,
        ]
    });
    Ok(RobustTetraField {
        amps,
        phase: field.phase,
    })
}

pub fn robust_shift_2(lattice: &Lattice, field: &RobustTetraField) -> Result<RobustTetraField> {
    reorder(lattice, field, &S2)
}

/// S₂S₁S₀.
pub fn robust_shift(lattice: &Lattice, field: &RobustTetraField) -> Result<RobustTetraField> {
    robust_shift_2(lattice, &robust_shift_1(lattice, &robust_shift_0(lattice, field)?)?)
}

/// Robust site block (RH up, LH down, RH down, LH up): first walker then
/// mirror walker, as amplitude indices into a robust field.
pub fn robust_site_amps(block: &crate::lattice::SiteBlock) -> [usize; 4] {
    let (rh, lh) = (2 * block.rh, 2 * block.lh);
    [rh, lh + 1, rh + 1, lh]
}

/// Coin on robust site blocks: C† on the first walker, C on the mirror.
pub fn robust_coin(coins: &CoinSet) -> Complex4Matrix {
    block_diag(&coins.c.dagger(), &coins.c)
}

/// One robust substep: M, S₂S₁S₀, then the facet coin on every glued
/// walker-1 pair (skipped where the pair is broken).
pub fn substep_dirac_robust(
    lattice: &Lattice,
    field: &RobustTetraField,
    coins: &CoinSet,
    variant: Variant,
) -> Result<RobustTetraField> {
    let mut f = field.clone();
    if variant == Variant::PerSubstep {
        apply_blocks(&mut f.amps, lattice.sites().iter().map(robust_site_amps), &coins.m);
    }
    let mut f = robust_shift(lattice, &f)?;
    let coin = robust_coin(coins);
    let linked = lattice
        .sites()
        .iter()
        .enumerate()
        .filter(|(s, _)| lattice.site_linked(*s))
        .map(|(_, b)| robust_site_amps(b));
    apply_blocks(&mut f.amps, linked, &coin);
    f.phase = (f.phase + 1) % 3;
    Ok(f)
}

pub fn step_dirac_robust(
    lattice: &Lattice,
    field: &RobustTetraField,
    coins: &CoinSet,
    variant: Variant,
) -> Result<RobustTetraField> {
    let mut f = field.clone();
    for _ in 0..3 {
        f = substep_dirac_robust(lattice, &f, coins, variant)?;
    }
    if variant == Variant::Single {
        apply_blocks(&mut f.amps, lattice.sites().iter().map(robust_site_amps), &coins.m);
    }
    Ok(f)
}
