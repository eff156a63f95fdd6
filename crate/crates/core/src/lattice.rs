//! Tetrahedral tessellation of the periodic box.
//!
//! Sites of the ε-grid are classified by coordinate parity. All-even and
//! all-odd sites are forbidden; the remaining six parities form three
//! classes labelled by `direction`. A walker amplitude at a site of class `d`
//! arrives along `cycle_axis(d)` and leaves along `cycle_axis(cycle_axis(d))`,
//! so the classes are visited in the order x-class → y-class → z-class and the
//! move axes cycle z → x → y.
//!
//! Each non-forbidden site with even coordinate sum is a cell holding one LH
//! and one RH tetrahedron. The LH tetrahedron of cell c carries its blue facet
//! at c and its red facet at c + O(c); the RH tetrahedron carries red at c and
//! blue at c − O(c). Cyan and magenta facets sit half a lattice unit away on
//! the faces crossed by the walker between tetrahedra. Gluing is derived from
//! coincident facet positions.

use std::collections::HashMap;
use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WalkError};
use crate::tetra_engine;
use crate::Axis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hand {
    Left,
    Right,
}

impl Hand {
    pub fn letter(self) -> char {
        match self {
            Hand::Left => 'L',
            Hand::Right => 'R',
        }
    }
}

/// Facet label: 0 = blue, 1 = red, 2 = cyan, 3 = magenta.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FacetId(u8);

impl FacetId {
    pub const BLUE: FacetId = FacetId(0);
    pub const RED: FacetId = FacetId(1);
    pub const CYAN: FacetId = FacetId(2);
    pub const MAGENTA: FacetId = FacetId(3);
    pub const ALL: [FacetId; 4] = [FacetId(0), FacetId(1), FacetId(2), FacetId(3)];

    pub fn new(v: u8) -> Result<FacetId> {
        if v < 4 {
            Ok(FacetId(v))
        } else {
            Err(WalkError::InvalidArgument(format!("facet {v} outside 0..=3")))
        }
    }

    pub fn value(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TetraIndex {
    pub cell: [i64; 3],
    pub hand: Hand,
}

impl fmt::Display for TetraIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z] = self.cell;
        write!(f, "{x},{y},{z},{}", self.hand.letter())
    }
}

/// One side of a facet gluing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FacetRef {
    pub tetra: usize,
    pub facet: FacetId,
}

impl FacetRef {
    pub fn amp(self) -> usize {
        4 * self.tetra + self.facet.value()
    }

    pub fn from_amp(a: usize) -> FacetRef {
        FacetRef {
            tetra: a / 4,
            facet: FacetId((a % 4) as u8),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeSpec {
    pub dims: [usize; 3],
    pub eps: f64,
    pub broken_links: Vec<(TetraIndex, FacetId)>,
}

impl LatticeSpec {
    pub fn periodic(dims: [usize; 3], eps: f64) -> LatticeSpec {
        LatticeSpec {
            dims,
            eps,
            broken_links: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &d in &self.dims {
            if d < 2 || d % 2 != 0 {
                return Err(WalkError::InvalidArgument(format!(
                    "dims {:?}: every component must be even and >= 2",
                    self.dims
                )));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(WalkError::InvalidArgument(format!("eps {} must be > 0", self.eps)));
        }
        Ok(())
    }
}

/// Parity class label of a site; `None` for all-even and all-odd sites.
pub fn direction(k: [i64; 3]) -> Option<Axis> {
    let p = k.map(|v| v.rem_euclid(2));
    match p {
        [0, 1, 1] | [1, 0, 0] => Some(Axis::X),
        [1, 0, 1] | [0, 1, 0] => Some(Axis::Y),
        [1, 1, 0] | [0, 0, 1] => Some(Axis::Z),
        _ => None,
    }
}

/// z → x → y → z.
pub fn cycle_axis(a: Axis) -> Axis {
    match a {
        Axis::Z => Axis::X,
        Axis::X => Axis::Y,
        Axis::Y => Axis::Z,
    }
}

/// Axis along which walker amplitudes arrive at `k`.
pub fn arrival_axis(k: [i64; 3]) -> Option<Axis> {
    direction(k).map(cycle_axis)
}

/// Axis along which walker amplitudes leave `k`.
pub fn departure_axis(k: [i64; 3]) -> Option<Axis> {
    direction(k).map(|a| cycle_axis(cycle_axis(a)))
}

/// Class index 0, 1, 2 for the x, y, z parity classes.
pub fn class_index(k: [i64; 3]) -> Option<usize> {
    direction(k).map(Axis::index)
}

fn add(a: [i64; 3], b: [i64; 3]) -> [i64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scaled(a: Axis, s: i64) -> [i64; 3] {
    a.unit().map(|v| v * s)
}

/// Site block: the two walker-1 amplitudes meeting at a site.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiteBlock {
    pub pos: [i64; 3],
    /// Amplitude index (4·tetra + facet) of the RH walker-1 amplitude.
    pub rh: usize,
    /// Amplitude index of the LH walker-1 amplitude.
    pub lh: usize,
}

impl SiteBlock {
    /// Amplitude indices in spinor order (RH, LH, LH companion, RH companion).
    pub fn spinor_amps(&self) -> [usize; 4] {
        [self.rh, self.lh, self.lh + 2, self.rh + 2]
    }
}

#[derive(Clone, Debug)]
pub struct Lattice {
    spec: LatticeSpec,
    tetras: Vec<TetraIndex>,
    cell_slot: Vec<u32>,
    gluing: Vec<[Option<FacetRef>; 4]>,
    positions: Vec<[[i64; 3]; 4]>,
    sites: Vec<SiteBlock>,
    site_slot: Vec<u32>,
}

const NO_SLOT: u32 = u32::MAX;

pub fn build_lattice(spec: LatticeSpec) -> Result<Lattice> {
    spec.validate()?;
    let dims = spec.dims;
    let n = dims.map(|d| d as i64);
    let grid_len = dims.iter().product::<usize>();
    let mut tetras = Vec::with_capacity(3 * grid_len / 4);
    let mut positions = Vec::with_capacity(3 * grid_len / 4);
    let mut cell_slot = vec![NO_SLOT; grid_len];
    let wrap2 = |p: [i64; 3]| [0, 1, 2].map(|i| p[i].rem_euclid(2 * n[i]));

    for x in 0..n[0] {
        for y in 0..n[1] {
            for z in 0..n[2] {
                let c = [x, y, z];
                if (x + y + z) % 2 != 0 || direction(c).is_none() {
                    continue;
                }
                let id = tetras.len();
                cell_slot[grid_index(dims, c)] = id as u32;
                let o = departure_axis(c).unwrap();
                let l = arrival_axis(c).unwrap();

                let r = add(c, o.unit());
                let or = departure_axis(r).unwrap();
                tetras.push(TetraIndex { cell: c, hand: Hand::Left });
                positions.push([
                    wrap2(c.map(|v| 2 * v)),
                    wrap2(r.map(|v| 2 * v)),
                    wrap2(add(c.map(|v| 2 * v), scaled(l, -1))),
                    wrap2(add(r.map(|v| 2 * v), or.unit())),
                ]);

                let b = add(c, scaled(o, -1));
                let ob = departure_axis(b).unwrap();
                tetras.push(TetraIndex { cell: c, hand: Hand::Right });
                positions.push([
                    wrap2(b.map(|v| 2 * v)),
                    wrap2(c.map(|v| 2 * v)),
                    wrap2(add(b.map(|v| 2 * v), scaled(ob, -1))),
                    wrap2(add(c.map(|v| 2 * v), l.unit())),
                ]);
            }
        }
    }

    let mut by_pos: HashMap<[i64; 3], Vec<usize>> = HashMap::with_capacity(2 * positions.len());
    for (t, ps) in positions.iter().enumerate() {
        for (f, p) in ps.iter().enumerate() {
            by_pos.entry(*p).or_default().push(4 * t + f);
        }
    }
    let mut gluing = vec![[None; 4]; tetras.len()];
    for amps in by_pos.values() {
        if amps.len() != 2 {
            return Err(WalkError::InvalidArgument(format!(
                "dims {:?}: facet position shared by {} amplitudes",
                dims,
                amps.len()
            )));
        }
        let (a, b) = (FacetRef::from_amp(amps[0]), FacetRef::from_amp(amps[1]));
        gluing[a.tetra][a.facet.value()] = Some(b);
        gluing[b.tetra][b.facet.value()] = Some(a);
    }

    let mut sites = Vec::with_capacity(3 * grid_len / 4);
    let mut site_slot = vec![NO_SLOT; grid_len];
    for x in 0..n[0] {
        for y in 0..n[1] {
            for z in 0..n[2] {
                let q = [x, y, z];
                if direction(q).is_none() {
                    continue;
                }
                let amps = &by_pos[&q.map(|v| 2 * v)];
                let (mut rh, mut lh) = (amps[0], amps[1]);
                if tetras[rh / 4].hand == Hand::Left {
                    std::mem::swap(&mut rh, &mut lh);
                }
                site_slot[grid_index(dims, q)] = sites.len() as u32;
                sites.push(SiteBlock { pos: q, rh, lh });
            }
        }
    }

    let mut lattice = Lattice {
        spec: LatticeSpec {
            broken_links: Vec::new(),
            ..spec.clone()
        },
        tetras,
        cell_slot,
        gluing,
        positions,
        sites,
        site_slot,
    };
    for &(t, f) in &spec.broken_links {
        lattice.break_link(t, f)?;
    }
    Ok(lattice)
}

pub fn grid_index(dims: [usize; 3], q: [i64; 3]) -> usize {
    let w = [0, 1, 2].map(|i| q[i].rem_euclid(dims[i] as i64) as usize);
    (w[0] * dims[1] + w[1]) * dims[2] + w[2]
}

impl Lattice {
    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn dims(&self) -> [usize; 3] {
        self.spec.dims
    }

    pub fn eps(&self) -> f64 {
        self.spec.eps
    }

    pub fn tetra_count(&self) -> usize {
        self.tetras.len()
    }

    pub fn amp_count(&self) -> usize {
        4 * self.tetras.len()
    }

    pub fn tetras(&self) -> &[TetraIndex] {
        &self.tetras
    }

    pub fn tetra(&self, t: usize) -> TetraIndex {
        self.tetras[t]
    }

    pub fn hand(&self, t: usize) -> Hand {
        self.tetras[t].hand
    }

    pub fn find(&self, idx: TetraIndex) -> Option<usize> {
        let n = self.spec.dims.map(|d| d as i64);
        if (0..3).any(|i| idx.cell[i] < 0 || idx.cell[i] >= n[i]) {
            return None;
        }
        let slot = self.cell_slot[grid_index(self.spec.dims, idx.cell)];
        if slot == NO_SLOT {
            return None;
        }
        Some(slot as usize + usize::from(idx.hand == Hand::Right))
    }

    /// n(t, f) with the partner facet, or `None` across a broken link.
    pub fn neighbor(&self, t: usize, f: FacetId) -> Option<FacetRef> {
        self.gluing[t][f.value()]
    }

    pub fn gluing(&self) -> &[[Option<FacetRef>; 4]] {
        &self.gluing
    }

    /// Facet position in doubled lattice coordinates, wrapped to [0, 2·dims).
    pub fn position2(&self, t: usize, f: FacetId) -> [i64; 3] {
        self.positions[t][f.value()]
    }

    pub fn sites(&self) -> &[SiteBlock] {
        &self.sites
    }

    pub fn site_at(&self, q: [i64; 3]) -> Option<usize> {
        let slot = self.site_slot[grid_index(self.spec.dims, q)];
        (slot != NO_SLOT).then_some(slot as usize)
    }

    pub fn has_defects(&self) -> bool {
        !self.spec.broken_links.is_empty() || self.gluing.iter().flatten().any(Option::is_none)
    }

    pub fn broken_links(&self) -> &[(TetraIndex, FacetId)] {
        &self.spec.broken_links
    }

    /// Removes a gluing on both sides.
    pub fn break_link(&mut self, t: TetraIndex, f: FacetId) -> Result<()> {
        let id = self
            .find(t)
            .ok_or_else(|| WalkError::InvalidArgument(format!("no tetrahedron {t}")))?;
        let Some(partner) = self.gluing[id][f.value()] else {
            return Ok(());
        };
        self.gluing[id][f.value()] = None;
        self.gluing[partner.tetra][partner.facet.value()] = None;
        self.spec.broken_links.push((t, f));
        self.spec.broken_links.push((self.tetras[partner.tetra], partner.facet));
        Ok(())
    }

    /// Overwrites one side of a gluing without touching the partner. Only for
    /// exercising `validate_gluing` on corrupted tables.
    pub fn set_gluing_unchecked(&mut self, t: usize, f: FacetId, to: Option<FacetRef>) {
        self.gluing[t][f.value()] = to;
    }

    /// Whether the walker-1 pair at a site is still glued.
    pub fn site_linked(&self, s: usize) -> bool {
        let b = self.sites[s];
        self.gluing[b.rh / 4][b.rh % 4].map(FacetRef::amp) == Some(b.lh)
    }

    /// Physical coordinates of a facet.
    pub fn physical_position(&self, t: usize, f: FacetId) -> [f64; 3] {
        self.position2(t, f).map(|v| 0.5 * v as f64 * self.spec.eps)
    }
}

/// Outcome of `validate_gluing`.
#[derive(Clone, Debug, PartialEq)]
pub struct GluingReport {
    pub passed: bool,
    pub involution_ok: bool,
    pub handedness_ok: bool,
    pub displacement_ok: bool,
    pub counterexample: Option<String>,
}

fn expected_partner_facet(hand: Hand, f: FacetId) -> (Hand, [FacetId; 1]) {
    match (hand, f.value()) {
        (Hand::Left, 0) => (Hand::Right, [FacetId::RED]),
        (Hand::Left, 1) => (Hand::Right, [FacetId::BLUE]),
        (Hand::Left, 2) => (Hand::Left, [FacetId::MAGENTA]),
        (Hand::Left, _) => (Hand::Left, [FacetId::CYAN]),
        (Hand::Right, 0) => (Hand::Left, [FacetId::RED]),
        (Hand::Right, 1) => (Hand::Left, [FacetId::BLUE]),
        (Hand::Right, 2) => (Hand::Right, [FacetId::MAGENTA]),
        (Hand::Right, _) => (Hand::Right, [FacetId::CYAN]),
    }
}

/// Certifies the gluing table: involution, handedness pattern, and the
/// displacement law of the composed shift on blue/red amplitudes.
pub fn validate_gluing(lattice: &Lattice) -> GluingReport {
    let mut report = GluingReport {
        passed: false,
        involution_ok: true,
        handedness_ok: true,
        displacement_ok: true,
        counterexample: None,
    };
    let note = |report: &mut GluingReport, msg: String| {
        if report.counterexample.is_none() {
            report.counterexample = Some(msg);
        }
    };

    for t in 0..lattice.tetra_count() {
        for f in FacetId::ALL {
            let Some(p) = lattice.neighbor(t, f) else { continue };
            if lattice.neighbor(p.tetra, p.facet) != Some(FacetRef { tetra: t, facet: f }) {
                report.involution_ok = false;
                note(
                    &mut report,
                    format!(
                        "involution: n({}, {}) = ({}, {}) but the reverse link differs",
                        lattice.tetra(t),
                        f.value(),
                        lattice.tetra(p.tetra),
                        p.facet.value()
                    ),
                );
            }
            let (hand, [facet]) = expected_partner_facet(lattice.hand(t), f);
            if lattice.hand(p.tetra) != hand || p.facet != facet {
                report.handedness_ok = false;
                note(
                    &mut report,
                    format!(
                        "handedness: facet {} of {} glued to facet {} of {}",
                        f.value(),
                        lattice.tetra(t),
                        p.facet.value(),
                        lattice.tetra(p.tetra)
                    ),
                );
            }
        }
    }

    if report.involution_ok && report.handedness_ok {
        if lattice.has_defects() {
            report.displacement_ok = false;
            note(&mut report, "displacement: lattice has broken links".into());
        } else {
            match displacement_counterexample(lattice) {
                Ok(None) => {}
                Ok(Some(msg)) => {
                    report.displacement_ok = false;
                    note(&mut report, msg);
                }
                Err(e) => {
                    report.displacement_ok = false;
                    note(&mut report, format!("displacement: {e}"));
                }
            }
        }
    } else {
        report.displacement_ok = false;
    }
    report.passed = report.involution_ok && report.handedness_ok && report.displacement_ok;
    report
}

fn displacement_counterexample(lattice: &Lattice) -> Result<Option<String>> {
    let perm = tetra_engine::extract_permutation(lattice, |f| tetra_engine::shift(lattice, f))?;
    let dims = lattice.dims().map(|d| d as i64);
    for (src, &dst) in perm.iter().enumerate() {
        let from = FacetRef::from_amp(src);
        if from.facet.value() >= 2 {
            continue;
        }
        let to = FacetRef::from_amp(dst);
        let q = lattice.position2(from.tetra, from.facet).map(|v| v / 2);
        let sign = if lattice.hand(from.tetra) == Hand::Left { 1 } else { -1 };
        let out = departure_axis(q).expect("walker sites are never forbidden");
        let expect = [0, 1, 2].map(|i| (q[i] + sign * out.unit()[i]).rem_euclid(dims[i]));
        let got2 = lattice.position2(to.tetra, to.facet);
        let got = got2.map(|v| v / 2);
        let class_ok = direction(got).map(Axis::index) == direction(q).map(|a| (a.index() + 1) % 3);
        if to.facet.value() >= 2 || got2.iter().any(|v| v % 2 != 0) || got != expect || !class_ok {
            return Ok(Some(format!(
                "displacement: amplitude facet {} of {} at {:?} moved to {:?}, expected {:?}",
                from.facet.value(),
                lattice.tetra(from.tetra),
                q,
                got,
                expect
            )));
        }
    }
    Ok(None)
}

/// Port of a dual-graph node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Port {
    Link { node: usize, port: usize },
    Boundary,
}

/// Four-valent dual graph: one node per tetrahedron, port i for facet i.
#[derive(Clone, Debug, PartialEq)]
pub struct DualGraph {
    pub nodes: Vec<TetraIndex>,
    pub ports: Vec<[Port; 4]>,
}

pub fn dual_graph(lattice: &Lattice) -> DualGraph {
    let ports = (0..lattice.tetra_count())
        .map(|t| {
            FacetId::ALL.map(|f| match lattice.neighbor(t, f) {
                Some(p) => Port::Link {
                    node: p.tetra,
                    port: p.facet.value(),
                },
                None => Port::Boundary,
            })
        })
        .collect();
    DualGraph {
        nodes: lattice.tetras().to_vec(),
        ports,
    }
}

impl DualGraph {
    pub fn follow(&self, node: usize, port: usize) -> Port {
        self.ports[node][port]
    }

    pub fn is_involution(&self) -> bool {
        self.ports.iter().enumerate().all(|(a, ps)| {
            ps.iter().enumerate().all(|(i, p)| match *p {
                Port::Link { node, port } => self.ports[node][port] == Port::Link { node: a, port: i },
                Port::Boundary => true,
            })
        })
    }

    /// Per-port neighbor handedness of a node.
    pub fn handedness_pattern(&self, node: usize) -> [Option<Hand>; 4] {
        self.ports[node].map(|p| match p {
            Port::Link { node, .. } => Some(self.nodes[node].hand),
            Port::Boundary => None,
        })
    }

    /// One line per link, `nodeA portA nodeB portB`, each link listed once.
    pub fn edge_list(&self) -> String {
        let mut out = String::new();
        for (a, ps) in self.ports.iter().enumerate() {
            for (i, p) in ps.iter().enumerate() {
                if let Port::Link { node, port } = *p {
                    if (a, i) < (node, port) {
                        out.push_str(&format!("{} {} {} {}\n", self.nodes[a], i, self.nodes[node], port));
                    }
                }
            }
        }
        out
    }

    pub fn parse_edge_list(text: &str, nodes: Vec<TetraIndex>) -> Result<DualGraph> {
        let lookup: HashMap<TetraIndex, usize> = nodes.iter().enumerate().map(|(i, t)| (*t, i)).collect();
        let mut ports = vec![[Port::Boundary; 4]; nodes.len()];
        let bad = |n: usize, msg: &str| WalkError::InvalidArgument(format!("edge list line {n}: {msg}"));
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 4 {
                return Err(bad(n + 1, "expected 4 fields"));
            }
            let node = |s: &str| -> Result<usize> {
                let parts: Vec<&str> = s.split(',').collect();
                if parts.len() != 4 {
                    return Err(bad(n + 1, "node must be x,y,z,H"));
                }
                let mut cell = [0i64; 3];
                for i in 0..3 {
                    cell[i] = parts[i].parse().map_err(|_| bad(n + 1, "bad coordinate"))?;
                }
                let hand = match parts[3] {
                    "L" => Hand::Left,
                    "R" => Hand::Right,
                    _ => return Err(bad(n + 1, "handedness must be L or R")),
                };
                lookup
                    .get(&TetraIndex { cell, hand })
                    .copied()
                    .ok_or_else(|| bad(n + 1, "unknown node"))
            };
            let port = |s: &str| -> Result<usize> {
                s.parse::<usize>()
                    .ok()
                    .filter(|&p| p < 4)
                    .ok_or_else(|| bad(n + 1, "port must be 0..=3"))
            };
            let (a, pa, b, pb) = (node(fields[0])?, port(fields[1])?, node(fields[2])?, port(fields[3])?);
            ports[a][pa] = Port::Link { node: b, port: pb };
            ports[b][pb] = Port::Link { node: a, port: pa };
        }
        Ok(DualGraph { nodes, ports })
    }
}

/// Every glued facet pair listed once, as (tetra, facet) of the lower amplitude.
pub fn links(lattice: &Lattice) -> Vec<(TetraIndex, FacetId)> {
    let mut out = Vec::new();
    for t in 0..lattice.tetra_count() {
        for f in FacetId::ALL {
            if let Some(p) = lattice.neighbor(t, f) {
                if 4 * t + f.value() < p.amp() {
                    out.push((lattice.tetra(t), f));
                }
            }
        }
    }
    out
}

/// Seeded choice of `round(fraction · links)` links to break, using ChaCha8.
pub fn random_broken_links(lattice: &Lattice, fraction: f64, seed: u64) -> Result<Vec<(TetraIndex, FacetId)>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(WalkError::InvalidArgument(format!("defect fraction {fraction} outside [0, 1]")));
    }
    let all = links(lattice);
    let count = (fraction * all.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = sample(&mut rng, all.len(), count).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| all[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize) -> Lattice {
        build_lattice(LatticeSpec::periodic([n; 3], 1.0)).unwrap()
    }

    #[test]
    fn direction_table() {
        assert_eq!(direction([0, 1, 1]), Some(Axis::X));
        assert_eq!(direction([0, 0, 0]), None);
        assert_eq!(direction([1, 1, 1]), None);
        assert_eq!(direction([1, 0, 1]), Some(Axis::Y));
        assert_eq!(direction([2, 3, 5]), Some(Axis::X));
        assert_eq!(direction([-1, 0, 0]), Some(Axis::X));
    }

    #[test]
    fn cycle_axis_examples() {
        assert_eq!(cycle_axis(Axis::Z), Axis::X);
        assert_eq!(cycle_axis(Axis::X), Axis::Y);
        for a in Axis::ALL {
            assert_eq!(cycle_axis(cycle_axis(cycle_axis(a))), a);
        }
    }

    #[test]
    fn departure_reaches_next_class() {
        for p in 0..8i64 {
            let q = [p & 1, (p >> 1) & 1, (p >> 2) & 1];
            let Some(d) = direction(q) else { continue };
            let o = departure_axis(q).unwrap();
            for s in [1, -1] {
                let next = add(q, scaled(o, s));
                assert_eq!(direction(next), Some(cycle_axis(d)), "from {q:?} sign {s}");
            }
            let l = arrival_axis(q).unwrap();
            let prev = add(q, scaled(l, -1));
            assert_eq!(departure_axis(prev), Some(l));
        }
    }

    #[test]
    fn counts_and_involution() {
        for n in [2, 4, 6] {
            let lat = lattice(n);
            let lh = lat.tetras().iter().filter(|t| t.hand == Hand::Left).count();
            assert_eq!(lat.tetra_count(), 3 * n * n * n / 4);
            assert_eq!(2 * lh, lat.tetra_count());
            assert_eq!(lat.sites().len(), 3 * n * n * n / 4);
            for t in 0..lat.tetra_count() {
                for f in FacetId::ALL {
                    let p = lat.neighbor(t, f).unwrap();
                    assert_eq!(lat.neighbor(p.tetra, p.facet), Some(FacetRef { tetra: t, facet: f }));
                }
            }
        }
    }

    #[test]
    fn odd_dims_rejected() {
        assert!(build_lattice(LatticeSpec::periodic([3, 4, 4], 1.0)).is_err());
        assert!(build_lattice(LatticeSpec::periodic([0, 4, 4], 1.0)).is_err());
    }

    #[test]
    fn find_roundtrip() {
        let lat = lattice(4);
        for (t, idx) in lat.tetras().iter().enumerate() {
            assert_eq!(lat.find(*idx), Some(t));
        }
        assert_eq!(lat.find(TetraIndex { cell: [0, 0, 0], hand: Hand::Left }), None);
    }

    #[test]
    fn gluing_certified() {
        for n in [2, 4] {
            let r = validate_gluing(&lattice(n));
            assert!(r.passed, "{:?}", r.counterexample);
        }
    }

    #[test]
    fn unilateral_break_detected() {
        let mut lat = lattice(4);
        lat.set_gluing_unchecked(0, FacetId::CYAN, None);
        let r = validate_gluing(&lat);
        assert!(!r.passed && !r.involution_ok);
        assert!(r.counterexample.unwrap().starts_with("involution"));
    }

    #[test]
    fn permuted_gluing_detected() {
        let mut lat = lattice(4);
        // Rotate the LH cyan→magenta partners by one.
        let lh: Vec<usize> = (0..lat.tetra_count()).filter(|&t| lat.hand(t) == Hand::Left).collect();
        let partners: Vec<FacetRef> = lh.iter().map(|&t| lat.neighbor(t, FacetId::CYAN).unwrap()).collect();
        for (i, &t) in lh.iter().enumerate() {
            let p = partners[(i + 1) % partners.len()];
            lat.set_gluing_unchecked(t, FacetId::CYAN, Some(p));
            lat.set_gluing_unchecked(p.tetra, p.facet, Some(FacetRef { tetra: t, facet: FacetId::CYAN }));
        }
        let r = validate_gluing(&lat);
        assert!(r.involution_ok && r.handedness_ok);
        assert!(!r.displacement_ok);
        assert!(r.counterexample.unwrap().starts_with("displacement"));
    }

    #[test]
    fn dual_graph_structure() {
        let lat = lattice(2);
        let g = dual_graph(&lat);
        assert_eq!(g.nodes.len(), 6);
        assert!(g.ports.iter().all(|ps| ps.iter().all(|p| *p != Port::Boundary)));
        assert!(g.is_involution());
        let lat4 = lattice(4);
        let g4 = dual_graph(&lat4);
        let lh = [Some(Hand::Right), Some(Hand::Right), Some(Hand::Left), Some(Hand::Left)];
        let rh = [Some(Hand::Left), Some(Hand::Left), Some(Hand::Right), Some(Hand::Right)];
        for (t, idx) in g4.nodes.iter().enumerate() {
            let expect = if idx.hand == Hand::Left { lh } else { rh };
            assert_eq!(g4.handedness_pattern(t), expect);
        }
    }

    #[test]
    fn broken_link_is_boundary_on_both_sides() {
        let mut lat = lattice(4);
        let t = lat.tetra(0);
        let partner = lat.neighbor(0, FacetId::CYAN).unwrap();
        lat.break_link(t, FacetId::CYAN).unwrap();
        let g = dual_graph(&lat);
        assert_eq!(g.follow(0, 2), Port::Boundary);
        assert_eq!(g.follow(partner.tetra, partner.facet.value()), Port::Boundary);
        assert_eq!(lat.broken_links().len(), 2);
        assert!(g.is_involution());
    }

    #[test]
    fn edge_list_roundtrip() {
        let mut lat = lattice(4);
        lat.break_link(lat.tetra(3), FacetId::RED).unwrap();
        let g = dual_graph(&lat);
        let text = g.edge_list();
        assert_eq!(text.lines().count(), 2 * lat.tetra_count() - 1);
        let first = text.lines().next().unwrap();
        assert_eq!(first.split_whitespace().count(), 4);
        let back = DualGraph::parse_edge_list(&text, g.nodes.clone()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn seeded_defects_reproducible() {
        let lat = lattice(4);
        let a = random_broken_links(&lat, 0.05, 7).unwrap();
        let b = random_broken_links(&lat, 0.05, 7).unwrap();
        let c = random_broken_links(&lat, 0.05, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), (0.05 * (2 * lat.tetra_count()) as f64).round() as usize);
    }
}
