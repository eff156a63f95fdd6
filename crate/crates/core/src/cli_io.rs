//! Batch front door: configuration, initial states, run orchestration,
//! snapshots, CSV reports, the validation suite and the benchmark.
//!
//! Config format: one `section.key = value` per line, `#` starts a comment.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `lattice.dims` | required | `N` or `Nx,Ny,Nz`, each even and ≥ 2 |
//! | `lattice.eps` | required | lattice spacing, > 0 |
//! | `lattice.boundary` | `periodic` | only periodic is supported |
//! | `lattice.defect_fraction` | `0` | fraction of links broken at random |
//! | `lattice.defect_seed` | `0` | ChaCha8 seed for defect placement |
//! | `lattice.broken_links` | empty | `x,y,z,H:f; ...` explicit broken facets |
//! | `walk.engine` | `spinor` | `spinor` or `tetra` |
//! | `walk.mode` | `dirac4` | `dirac4`, `weyl_first`, `weyl_mirror`, `robust4` |
//! | `walk.variant` | `massless` | `massless`, `massive_per_substep`, `massive_single` |
//! | `walk.mass` | `0` | ≥ 0 |
//! | `walk.steps` | required | full steps to run |
//! | `walk.start_axis` | `z` | axis of the first substep |
//! | `initial.packet` | `gaussian` | `gaussian`, `plane`, `delta` |
//! | `initial.center` | box center | physical coordinates `x,y,z` |
//! | `initial.width` | `8·eps` | gaussian width |
//! | `initial.momentum` | `0,0,0` | |
//! | `initial.polarization` | first component | `re,im; re,im; ...` (4 or 2 pairs) |
//! | `initial.component` | `0` | delta component |
//! | `output.dir` | `out` | artifact directory |
//! | `output.snapshot_every` | `0` | snapshot cadence in steps; 0 = first and last only |
//! | `output.marginals` | `true` | write per-snapshot marginal sidecars |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{CoinSet, C64, IDENTITY_TOL, ONE, ZERO};
use crate::error::{Result, WalkError};
use crate::lattice::{build_lattice, dual_graph, random_broken_links, validate_gluing, FacetId, Hand, Lattice, LatticeSpec, TetraIndex};
use crate::reference::{fmt_f64, walk_symbol, PacketKind, WavePacket};
use crate::spinor_model::{gather, gather_robust, gather_site, scatter, scatter_robust, step, step_massive, Mode, SpinorField, Variant, WalkParams};
use crate::tetra_engine::{robust_shift, step_dirac_robust, step_dirac_tetra, RobustTetraField, TetraField};
use crate::Axis;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Spinor,
    Tetra,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Spinor => "spinor",
            Engine::Tetra => "tetra",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeConfig {
    pub dims: [usize; 3],
    pub eps: f64,
    pub defect_fraction: f64,
    pub defect_seed: u64,
    pub broken_links: Vec<(TetraIndex, FacetId)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WalkConfig {
    pub engine: Engine,
    pub mode: Mode,
    pub variant: Variant,
    pub mass: f64,
    pub steps: usize,
    pub start_axis: Axis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_every: usize,
    pub marginals: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub walk: WalkConfig,
    pub initial: WavePacket,
    pub output: OutputConfig,
}

fn config_err(line: usize, key: &str, message: impl Into<String>) -> WalkError {
    WalkError::Config { line, key: key.to_string(), message: message.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| config_err(line, key, format!("cannot parse `{}`", v.trim())))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse_num(line, key, p)).collect()
}

fn parse_vec3(line: usize, key: &str, v: &str) -> Result<[f64; 3]> {
    let xs: Vec<f64> = parse_list(line, key, v)?;
    <[f64; 3]>::try_from(xs).map_err(|_| config_err(line, key, "expected three comma-separated numbers"))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(config_err(line, key, format!("expected a boolean, got `{v}`"))),
    }
}

fn parse_polarization(line: usize, key: &str, v: &str) -> Result<Vec<C64>> {
    v.split(';')
        .map(|pair| {
            let xs: Vec<f64> = parse_list(line, key, pair)?;
            match xs[..] {
                [re, im] => Ok(C64::new(re, im)),
                _ => Err(config_err(line, key, format!("`{}` is not a re,im pair", pair.trim()))),
            }
        })
        .collect()
}

/// Parses `x,y,z,H:f` entries separated by `;`.
pub fn parse_broken_links(text: &str) -> Result<Vec<(TetraIndex, FacetId)>> {
    let bad = |s: &str| WalkError::Format(format!("bad broken link `{s}`, expected x,y,z,H:f"));
    let mut out = Vec::new();
    for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (node, facet) = item.split_once(':').ok_or_else(|| bad(item))?;
        let parts: Vec<&str> = node.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(bad(item));
        }
        let mut cell = [0i64; 3];
        for i in 0..3 {
            cell[i] = parts[i].parse().map_err(|_| bad(item))?;
        }
        let hand = match parts[3] {
            "L" => Hand::Left,
            "R" => Hand::Right,
            _ => return Err(bad(item)),
        };
        let f: u8 = facet.trim().parse().map_err(|_| bad(item))?;
        out.push((TetraIndex { cell, hand }, FacetId::new(f)?));
    }
    Ok(out)
}

pub fn format_broken_links(links: &[(TetraIndex, FacetId)]) -> String {
    links.iter().map(|(t, f)| format!("{t}:{}", f.value())).collect::<Vec<_>>().join("; ")
}

/// Parses and validates a run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut seen: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_err(line, content, "expected `section.key = value`"))?;
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(config_err(line, &key, "unknown key"));
        }
        if let Some((prev, _)) = seen.get(&key) {
            return Err(config_err(line, &key, format!("duplicate key, first set on line {prev}")));
        }
        seen.insert(key, (line, value.trim().to_string()));
    }
    let get = |k: &str| seen.get(k).map(|(l, v)| (*l, v.as_str()));
    let required = |k: &str| get(k).ok_or_else(|| config_err(0, k, "missing required key"));

    let (l, v) = required("lattice.dims")?;
    let ds: Vec<usize> = parse_list(l, "lattice.dims", v)?;
    let dims = match ds[..] {
        [n] => [n; 3],
        [a, b, c] => [a, b, c],
        _ => return Err(config_err(l, "lattice.dims", "expected N or Nx,Ny,Nz")),
    };
    if dims.iter().any(|&d| d < 2 || d % 2 != 0) {
        return Err(config_err(l, "lattice.dims", format!("dims must be even and >= 2, got {dims:?}")));
    }
    let (l, v) = required("lattice.eps")?;
    let eps: f64 = parse_num(l, "lattice.eps", v)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(config_err(l, "lattice.eps", "eps must be > 0"));
    }
    if let Some((l, v)) = get("lattice.boundary") {
        if v != "periodic" {
            return Err(config_err(l, "lattice.boundary", format!("unsupported boundary `{v}`, only periodic")));
        }
    }
    let defect_fraction = match get("lattice.defect_fraction") {
        Some((l, v)) => {
            let f: f64 = parse_num(l, "lattice.defect_fraction", v)?;
            if !(0.0..=1.0).contains(&f) {
                return Err(config_err(l, "lattice.defect_fraction", "must lie in [0, 1]"));
            }
            f
        }
        None => 0.0,
    };
    let defect_seed = match get("lattice.defect_seed") {
        Some((l, v)) => parse_num(l, "lattice.defect_seed", v)?,
        None => 0,
    };
    let broken_links = match get("lattice.broken_links") {
        Some((l, v)) => parse_broken_links(v).map_err(|e| config_err(l, "lattice.broken_links", e.to_string()))?,
        None => Vec::new(),
    };

    let engine = match get("walk.engine") {
        None | Some((_, "spinor")) => Engine::Spinor,
        Some((_, "tetra")) => Engine::Tetra,
        Some((l, v)) => return Err(config_err(l, "walk.engine", format!("unknown engine `{v}`"))),
    };
    let mode = match get("walk.mode") {
        None => Mode::Dirac4,
        Some((l, v)) => Mode::parse(v).ok_or_else(|| config_err(l, "walk.mode", format!("unknown mode `{v}`")))?,
    };
    let variant = match get("walk.variant") {
        None => Variant::Massless,
        Some((l, v)) => Variant::parse(v).ok_or_else(|| config_err(l, "walk.variant", format!("unknown variant `{v}`")))?,
    };
    let mass = match get("walk.mass") {
        Some((l, v)) => {
            let m: f64 = parse_num(l, "walk.mass", v)?;
            if !(m.is_finite() && m >= 0.0) {
                return Err(config_err(l, "walk.mass", format!("mass must be >= 0, got {m}")));
            }
            m
        }
        None => 0.0,
    };
    let (l, v) = required("walk.steps")?;
    let steps = parse_num(l, "walk.steps", v)?;
    let start_axis = match get("walk.start_axis") {
        None => Axis::Z,
        Some((l, v)) => Axis::parse(v).ok_or_else(|| config_err(l, "walk.start_axis", format!("unknown axis `{v}`")))?,
    };

    let comps = mode.components();
    let width = match get("initial.width") {
        Some((l, v)) => parse_num(l, "initial.width", v)?,
        None => 8.0 * eps,
    };
    let component = match get("initial.component") {
        Some((l, v)) => {
            let c: usize = parse_num(l, "initial.component", v)?;
            if c >= comps {
                return Err(config_err(l, "initial.component", format!("must be < {comps}")));
            }
            c
        }
        None => 0,
    };
    let kind = match get("initial.packet") {
        None | Some((_, "gaussian")) => {
            if width < eps {
                let l = get("initial.width").map_or(0, |(l, _)| l);
                return Err(config_err(l, "initial.width", format!("width {width} smaller than eps {eps}")));
            }
            PacketKind::Gaussian { width }
        }
        Some((_, "plane")) => PacketKind::Plane,
        Some((_, "delta")) => PacketKind::Delta { component },
        Some((l, v)) => return Err(config_err(l, "initial.packet", format!("unknown packet `{v}`"))),
    };
    let center = match get("initial.center") {
        Some((l, v)) => Some(parse_vec3(l, "initial.center", v)?),
        None => None,
    };
    let momentum = match get("initial.momentum") {
        Some((l, v)) => parse_vec3(l, "initial.momentum", v)?,
        None => [0.0; 3],
    };
    let polarization = match get("initial.polarization") {
        Some((l, v)) => {
            let p = parse_polarization(l, "initial.polarization", v)?;
            if p.len() != comps {
                return Err(config_err(l, "initial.polarization", format!("mode {} needs {comps} pairs", mode.name())));
            }
            if p.iter().all(|z| *z == ZERO) {
                return Err(config_err(l, "initial.polarization", "polarization is zero"));
            }
            p
        }
        None => (0..comps).map(|c| if c == 0 { ONE } else { ZERO }).collect(),
    };

    let output = OutputConfig {
        dir: get("output.dir").map_or_else(|| PathBuf::from("out"), |(_, v)| PathBuf::from(v)),
        snapshot_every: match get("output.snapshot_every") {
            Some((l, v)) => parse_num(l, "output.snapshot_every", v)?,
            None => 0,
        },
        marginals: match get("output.marginals") {
            Some((l, v)) => parse_bool(l, "output.marginals", v)?,
            None => true,
        },
    };

    let config = RunConfig {
        lattice: LatticeConfig { dims, eps, defect_fraction, defect_seed, broken_links },
        walk: WalkConfig { engine, mode, variant, mass, steps, start_axis },
        initial: WavePacket { kind, center, momentum, polarization },
        output,
    };
    config.check_combination().map_err(|e| config_err(0, "walk", e.to_string()))?;
    Ok(config)
}

const KNOWN_KEYS: &[&str] = &[
    "lattice.dims",
    "lattice.eps",
    "lattice.boundary",
    "lattice.defect_fraction",
    "lattice.defect_seed",
    "lattice.broken_links",
    "walk.engine",
    "walk.mode",
    "walk.variant",
    "walk.mass",
    "walk.steps",
    "walk.start_axis",
    "initial.packet",
    "initial.center",
    "initial.width",
    "initial.momentum",
    "initial.polarization",
    "initial.component",
    "output.dir",
    "output.snapshot_every",
    "output.marginals",
];

fn join3<T: ToString>(v: [T; 3]) -> String {
    v.map(|x| x.to_string()).join(",")
}

impl RunConfig {
    /// Config with every optional key at its default.
    pub fn minimal(dims: [usize; 3], eps: f64, steps: usize) -> RunConfig {
        parse_config(&format!("lattice.dims = {}\nlattice.eps = {eps}\nwalk.steps = {steps}\n", join3(dims)))
            .expect("minimal config is valid")
    }

    pub fn params(&self) -> WalkParams {
        WalkParams {
            mass: self.walk.mass,
            eps: self.lattice.eps,
            variant: self.walk.variant,
            mode: self.walk.mode,
            start_axis: self.walk.start_axis,
        }
    }

    pub fn has_defects(&self) -> bool {
        self.lattice.defect_fraction > 0.0 || !self.lattice.broken_links.is_empty()
    }

    fn check_combination(&self) -> Result<()> {
        self.params().validate()?;
        let w = &self.walk;
        if w.engine == Engine::Tetra {
            if !matches!(w.mode, Mode::Dirac4 | Mode::Robust4) {
                return Err(WalkError::UnsupportedConfiguration(format!(
                    "tetra engine runs dirac4 or robust4, not {}",
                    w.mode.name()
                )));
            }
            if w.start_axis != Axis::Z {
                return Err(WalkError::UnsupportedConfiguration(
                    "tetra engine starts along z by construction".into(),
                ));
            }
            let d = self.lattice.dims;
            if d[0] != d[1] || d[1] != d[2] {
                return Err(WalkError::UnsupportedConfiguration("tetra engine needs cubic dims".into()));
            }
        }
        if self.has_defects() && !(w.engine == Engine::Tetra && w.mode == Mode::Robust4) {
            return Err(WalkError::UnsupportedConfiguration(
                "broken links need walk.engine = tetra and walk.mode = robust4".into(),
            ));
        }
        Ok(())
    }

    /// Every key with its effective value, in config syntax.
    pub fn to_text(&self) -> String {
        let l = &self.lattice;
        let w = &self.walk;
        let p = &self.initial;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        kv("lattice.dims", join3(l.dims));
        kv("lattice.eps", l.eps.to_string());
        kv("lattice.boundary", "periodic".into());
        kv("lattice.defect_fraction", l.defect_fraction.to_string());
        kv("lattice.defect_seed", l.defect_seed.to_string());
        if !l.broken_links.is_empty() {
            kv("lattice.broken_links", format_broken_links(&l.broken_links));
        }
        kv("walk.engine", w.engine.name().into());
        kv("walk.mode", w.mode.name().into());
        kv("walk.variant", w.variant.name().into());
        kv("walk.mass", w.mass.to_string());
        kv("walk.steps", w.steps.to_string());
        kv("walk.start_axis", w.start_axis.name().into());
        let (packet, width, component) = match p.kind {
            PacketKind::Gaussian { width } => ("gaussian", width, 0),
            PacketKind::Plane => ("plane", 8.0 * l.eps, 0),
            PacketKind::Delta { component } => ("delta", 8.0 * l.eps, component),
        };
        kv("initial.packet", packet.into());
        let center = p.center.unwrap_or([0, 1, 2].map(|i| l.dims[i] as f64 * l.eps / 2.0));
        kv("initial.center", join3(center));
        kv("initial.width", width.to_string());
        kv("initial.momentum", join3(p.momentum));
        kv(
            "initial.polarization",
            p.polarization.iter().map(|z| format!("{},{}", z.re, z.im)).collect::<Vec<_>>().join("; "),
        );
        kv("initial.component", component.to_string());
        kv("output.dir", self.output.dir.display().to_string());
        kv("output.snapshot_every", self.output.snapshot_every.to_string());
        kv("output.marginals", self.output.marginals.to_string());
        out
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| WalkError::io(path, e))?;
    parse_config(&text)
}

/// Lattice for the tetra engine with configured defects applied.
pub fn build_run_lattice(config: &RunConfig) -> Result<Lattice> {
    let l = &config.lattice;
    let mut spec = LatticeSpec::periodic(l.dims, l.eps);
    if l.defect_fraction > 0.0 {
        let clean = build_lattice(spec.clone())?;
        spec.broken_links = random_broken_links(&clean, l.defect_fraction, l.defect_seed)?;
    }
    spec.broken_links.extend(l.broken_links.iter().copied());
    build_lattice(spec)
}

/// State of whichever engine a run uses.
#[derive(Clone, Debug, PartialEq)]
pub enum WalkState {
    Spinor(SpinorField),
    Tetra(TetraField),
    Robust(RobustTetraField),
}

impl WalkState {
    pub fn norm(&self) -> f64 {
        match self {
            WalkState::Spinor(f) => f.norm(),
            WalkState::Tetra(f) => f.norm(),
            WalkState::Robust(f) => f.norm(),
        }
    }
}

/// Zeroes spinor sites with no tetrahedral counterpart at phase 0.
fn restrict_to_tetra_support(field: &mut SpinorField, lattice: &Lattice) {
    let mut covered = vec![false; field.sites()];
    for b in lattice.sites() {
        covered[field.site_index(gather_site(b.pos, 0).unwrap())] = true;
    }
    let comps = field.comps;
    for (idx, cov) in covered.iter().enumerate() {
        if !cov {
            field.data[comps * idx..comps * (idx + 1)].fill(ZERO);
        }
    }
}

/// Initial state for the configured engine. The tetra engines receive the
/// packet restricted to the gathered sites and renormalized.
pub fn make_initial(config: &RunConfig, lattice: Option<&Lattice>) -> Result<WalkState> {
    let mut psi = config.initial.sample(config.lattice.dims, config.lattice.eps)?;
    if config.walk.engine == Engine::Spinor {
        return Ok(WalkState::Spinor(psi));
    }
    let lattice = lattice.ok_or_else(|| WalkError::InvalidArgument("tetra engine needs a lattice".into()))?;
    restrict_to_tetra_support(&mut psi, lattice);
    let n = psi.norm();
    if n == 0.0 {
        return Err(WalkError::InvalidArgument(
            "initial state vanishes on the tetrahedral support".into(),
        ));
    }
    psi.data.iter_mut().for_each(|v| *v /= n);
    Ok(match config.walk.mode {
        Mode::Robust4 => WalkState::Robust(scatter_robust(&psi, lattice)?),
        _ => WalkState::Tetra(scatter(&psi, lattice)?),
    })
}

/// Advances one full step.
pub fn advance(state: &WalkState, params: &WalkParams, coins: &CoinSet, lattice: Option<&Lattice>) -> Result<WalkState> {
    let need = || lattice.ok_or_else(|| WalkError::InvalidArgument("tetra engine needs a lattice".into()));
    Ok(match state {
        WalkState::Spinor(f) => WalkState::Spinor(step(f, params)?),
        WalkState::Tetra(f) => WalkState::Tetra(step_dirac_tetra(need()?, f, coins, params.variant)?),
        WalkState::Robust(f) => WalkState::Robust(step_dirac_robust(need()?, f, coins, params.variant)?),
    })
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"TQW1";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Mode tag byte: 0..=3 spinor modes (dirac4, weyl_first, weyl_mirror,
/// robust4), 4 tetra dirac4, 5 tetra robust4.
pub fn mode_tag(engine: Engine, mode: Mode) -> u8 {
    match (engine, mode) {
        (Engine::Spinor, Mode::Dirac4) => 0,
        (Engine::Spinor, Mode::WeylFirst) => 1,
        (Engine::Spinor, Mode::WeylMirror) => 2,
        (Engine::Spinor, Mode::Robust4) => 3,
        (Engine::Tetra, Mode::Robust4) => 5,
        (Engine::Tetra, _) => 4,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub mode_tag: u8,
    pub dims: [u32; 3],
    pub comps: u32,
    pub eps: f64,
    /// Site-major, z fastest, components innermost.
    pub data: Vec<C64>,
}

impl Snapshot {
    pub fn header_len() -> usize {
        4 + 4 + 1 + 12 + 4 + 8
    }

    pub fn from_state(state: &WalkState, tag: u8, lattice: Option<&Lattice>) -> Result<Snapshot> {
        match state {
            WalkState::Spinor(f) => Ok(Snapshot {
                mode_tag: tag,
                dims: f.dims.map(|d| d as u32),
                comps: f.comps as u32,
                eps: f.eps,
                data: f.data.clone(),
            }),
            WalkState::Tetra(f) => cell_snapshot(tag, lattice, &f.amps, 4),
            WalkState::Robust(f) => cell_snapshot(tag, lattice, &f.amps, 8),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
        w.write_u8(self.mode_tag)?;
        for d in self.dims {
            w.write_u32::<LittleEndian>(d)?;
        }
        w.write_u32::<LittleEndian>(self.comps)?;
        w.write_f64::<LittleEndian>(self.eps)?;
        for z in &self.data {
            w.write_f64::<LittleEndian>(z.re)?;
            w.write_f64::<LittleEndian>(z.im)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::header_len() + 16 * self.data.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Snapshot> {
        let short = |_| WalkError::Format("truncated header".into());
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(short)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(WalkError::Format(format!("bad magic {magic:?}")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(short)?;
        if version != SNAPSHOT_VERSION {
            return Err(WalkError::Format(format!("unsupported version {version}")));
        }
        let mode_tag = r.read_u8().map_err(short)?;
        let mut dims = [0u32; 3];
        for d in dims.iter_mut() {
            *d = r.read_u32::<LittleEndian>().map_err(short)?;
        }
        let comps = r.read_u32::<LittleEndian>().map_err(short)?;
        let eps = r.read_f64::<LittleEndian>().map_err(short)?;
        let count = dims.iter().chain([&comps]).try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        let expect = count.and_then(|c| c.checked_mul(16));
        if expect != Some(r.len()) {
            return Err(WalkError::Format(format!(
                "payload is {} bytes, header implies {}",
                r.len(),
                expect.map_or("overflow".into(), |e| e.to_string())
            )));
        }
        let data = r
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        Ok(Snapshot { mode_tag, dims, comps, eps, data })
    }

    pub fn to_spinor(&self) -> SpinorField {
        SpinorField {
            dims: self.dims.map(|d| d as usize),
            eps: self.eps,
            comps: self.comps as usize,
            data: self.data.clone(),
            phase: 0,
        }
    }
}

/// Tetra amplitudes laid out per cell: LH amplitudes then RH amplitudes.
fn cell_snapshot(tag: u8, lattice: Option<&Lattice>, amps: &[C64], per_tetra: usize) -> Result<Snapshot> {
    let lattice = lattice.ok_or_else(|| WalkError::InvalidArgument("tetra snapshot needs the lattice".into()))?;
    let dims = lattice.dims();
    let comps = 2 * per_tetra;
    let mut data = vec![ZERO; dims.iter().product::<usize>() * comps];
    for (t, idx) in lattice.tetras().iter().enumerate() {
        let site = crate::lattice::grid_index(dims, idx.cell);
        let off = site * comps + if idx.hand == Hand::Left { 0 } else { per_tetra };
        data[off..off + per_tetra].copy_from_slice(&amps[per_tetra * t..per_tetra * (t + 1)]);
    }
    Ok(Snapshot { mode_tag: tag, dims: dims.map(|d| d as u32), comps: comps as u32, eps: lattice.eps(), data })
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| WalkError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    snap.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| WalkError::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| WalkError::io(path, e))?;
    Snapshot::from_bytes(&bytes)
}

/// Probability per grid site.
pub fn site_density(snap: &Snapshot) -> Vec<f64> {
    snap.data.chunks(snap.comps as usize).map(|s| s.iter().map(|z| z.norm_sqr()).sum()).collect()
}

/// Axis-wise sums of the site density.
pub fn marginals(snap: &Snapshot) -> [Vec<f64>; 3] {
    let d = snap.dims.map(|d| d as usize);
    let mut out = [vec![0.0; d[0]], vec![0.0; d[1]], vec![0.0; d[2]]];
    for (idx, p) in site_density(snap).into_iter().enumerate() {
        let z = idx % d[2];
        let y = (idx / d[2]) % d[1];
        let x = idx / (d[1] * d[2]);
        out[0][x] += p;
        out[1][y] += p;
        out[2][z] += p;
    }
    out
}

/// Mean position and spread per axis, from the marginals.
pub fn moments(snap: &Snapshot) -> ([f64; 3], [f64; 3]) {
    let m = marginals(snap);
    let mut mean = [0.0; 3];
    let mut spread = [0.0; 3];
    for a in 0..3 {
        let total: f64 = m[a].iter().sum();
        if total == 0.0 {
            continue;
        }
        let x = |i: usize| i as f64 * snap.eps;
        mean[a] = m[a].iter().enumerate().map(|(i, p)| x(i) * p).sum::<f64>() / total;
        let var = m[a].iter().enumerate().map(|(i, p)| (x(i) - mean[a]).powi(2) * p).sum::<f64>() / total;
        spread[a] = var.sqrt();
    }
    (mean, spread)
}

fn marginals_csv(snap: &Snapshot) -> String {
    let mut out = String::from("axis,index,position,probability\n");
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        for (i, p) in marginals(snap)[a].iter().enumerate() {
            writeln!(out, "{name},{i},{},{}", fmt_f64(i as f64 * snap.eps), fmt_f64(*p)).unwrap();
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub steps: usize,
    pub initial_norm: f64,
    pub final_norm: f64,
    pub max_drift: f64,
    pub snapshots: Vec<PathBuf>,
    pub walk_seconds: f64,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| WalkError::io(path, e))
}

fn thread_pool(parallelism: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.unwrap_or(0))
        .build()
        .map_err(|e| WalkError::InvalidArgument(format!("thread pool: {e}")))
}

/// Runs the configured walk and writes every artifact into `output.dir`.
/// `parallelism` is the worker thread count; `None` uses all cores.
pub fn run(config: &RunConfig, parallelism: Option<usize>) -> Result<RunSummary> {
    if parallelism == Some(0) {
        return Err(WalkError::InvalidArgument("parallelism must be >= 1".into()));
    }
    let pool = thread_pool(parallelism)?;
    pool.install(|| run_inner(config, parallelism))
}

fn run_inner(config: &RunConfig, parallelism: Option<usize>) -> Result<RunSummary> {
    let setup = Instant::now();
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|e| WalkError::io(dir, e))?;
    let lattice = match config.walk.engine {
        Engine::Tetra => Some(build_run_lattice(config)?),
        Engine::Spinor => None,
    };
    let lat = lattice.as_ref();
    let params = config.params();
    let coins = params.coins()?;
    let tag = mode_tag(config.walk.engine, config.walk.mode);
    let mut state = make_initial(config, lat)?;
    let setup_seconds = setup.elapsed().as_secs_f64();

    let steps = config.walk.steps;
    let every = config.output.snapshot_every;
    let n0 = state.norm();
    let mut norms = String::from("step,norm,drift\n");
    let mut observables = String::from("step,mean_x,mean_y,mean_z,spread_x,spread_y,spread_z\n");
    let mut snapshots = Vec::new();
    let mut max_drift: f64 = 0.0;
    let walk_start = Instant::now();
    for s in 0..=steps {
        if s > 0 {
            state = advance(&state, &params, &coins, lat)?;
        }
        let n = state.norm();
        let drift = (n - n0).abs() / n0;
        max_drift = max_drift.max(drift);
        writeln!(norms, "{s},{},{}", fmt_f64(n), fmt_f64(drift)).unwrap();
        let snap = Snapshot::from_state(&state, tag, lat)?;
        let (mean, spread) = moments(&snap);
        let row: Vec<String> = mean.iter().chain(&spread).map(|v| fmt_f64(*v)).collect();
        writeln!(observables, "{s},{}", row.join(",")).unwrap();
        if s == 0 || s == steps || (every > 0 && s % every == 0) {
            let path = dir.join(format!("snapshot_{s:06}.tqw"));
            write_snapshot(&path, &snap)?;
            snapshots.push(path);
            if config.output.marginals {
                write_file(&dir.join(format!("marginals_{s:06}.csv")), &marginals_csv(&snap))?;
            }
        }
    }
    let walk_seconds = walk_start.elapsed().as_secs_f64();
    let final_norm = state.norm();
    write_file(&dir.join("norms.csv"), &norms)?;
    write_file(&dir.join("observables.csv"), &observables)?;

    let mut meta = String::new();
    let mut kv = |k: &str, v: String| writeln!(meta, "{k} = {v}").unwrap();
    kv("software.name", env!("CARGO_PKG_NAME").into());
    kv("software.version", env!("CARGO_PKG_VERSION").into());
    kv("snapshot.version", SNAPSHOT_VERSION.to_string());
    kv("snapshot.mode_tag", tag.to_string());
    kv("run.parallelism", parallelism.map_or("auto".into(), |p| p.to_string()));
    kv("run.threads", rayon::current_num_threads().to_string());
    kv("run.rng", "ChaCha8".into());
    if let Some(l) = lat {
        kv("lattice.tetra_count", l.tetra_count().to_string());
        kv("lattice.broken_link_count", (l.broken_links().len() / 2).to_string());
    }
    kv("timing.setup_seconds", fmt_f64(setup_seconds));
    kv("timing.walk_seconds", fmt_f64(walk_seconds));
    kv("result.initial_norm", fmt_f64(n0));
    kv("result.final_norm", fmt_f64(final_norm));
    kv("result.max_drift", fmt_f64(max_drift));
    for line in config.to_text().lines() {
        meta.push_str("config.");
        meta.push_str(line);
        meta.push('\n');
    }
    write_file(&dir.join("run.meta"), &meta)?;

    Ok(RunSummary { steps, initial_norm: n0, final_norm, max_drift, snapshots, walk_seconds })
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub size: usize,
    pub steps: usize,
    pub threads: usize,
    pub seconds: f64,
    pub site_updates_per_second: f64,
    pub state_bytes: usize,
    pub peak_rss_bytes: Option<u64>,
}

impl BenchReport {
    pub const CSV_HEADER: &'static str = "size,steps,threads,seconds,site_updates_per_second,state_bytes,peak_rss_bytes";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.size,
            self.steps,
            self.threads,
            fmt_f64(self.seconds),
            fmt_f64(self.site_updates_per_second),
            self.state_bytes,
            self.peak_rss_bytes.map_or(String::new(), |b| b.to_string())
        )
    }
}

/// Peak resident set size from /proc, where available.
fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Massive dirac4 spinor walk (m = 0.1, ε = 0.1) on size³ for `steps` steps.
pub fn bench(size: usize, steps: usize, parallelism: Option<usize>) -> Result<BenchReport> {
    if size < 2 || size % 2 != 0 || steps == 0 || parallelism == Some(0) {
        return Err(WalkError::InvalidArgument("bench needs even size >= 2, steps >= 1, parallelism >= 1".into()));
    }
    let pool = thread_pool(parallelism)?;
    pool.install(|| {
        let params = WalkParams::new(0.1, 0.1, Variant::PerSubstep, Mode::Dirac4);
        let mut f = WavePacket::gaussian(8.0 * 0.1, [0.2, 0.1, 0.0], vec![ONE, ZERO, ZERO, ZERO]).sample([size; 3], 0.1)?;
        let start = Instant::now();
        for _ in 0..steps {
            f = step(&f, &params)?;
        }
        let seconds = start.elapsed().as_secs_f64();
        let sites = size * size * size;
        Ok(BenchReport {
            size,
            steps,
            threads: rayon::current_num_threads(),
            seconds,
            site_updates_per_second: (sites * steps) as f64 / seconds,
            state_bytes: 2 * f.data.len() * std::mem::size_of::<C64>(),
            peak_rss_bytes: peak_rss_bytes(),
        })
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, detail });
    }

    pub fn to_text(&self) -> String {
        self.checks
            .iter()
            .map(|c| format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail))
            .collect()
    }
}

/// Tolerance of the cross-model and unitarity checks.
pub const VALIDATE_TOL: f64 = 1e-12;

/// Gluing certification, algebra identities, symbol unitarity, robust ancilla
/// invariance and tetra/spinor equivalence on the configured lattice size.
pub fn validate(config: &RunConfig) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let params = config.params();
    let eps = config.lattice.eps;
    let mass = if config.walk.variant == Variant::Massless { 0.0 } else { config.walk.mass };

    let coins = CoinSet::new(mass, eps)?;
    let d = coins.identity_defect();
    report.push("algebra identities", d <= IDENTITY_TOL, format!("max defect {d:.3e}"));

    let clean = build_lattice(LatticeSpec::periodic(config.lattice.dims, eps))?;
    let g = validate_gluing(&clean);
    report.push(
        "gluing certification",
        g.passed,
        g.counterexample.clone().unwrap_or_else(|| format!("{} tetrahedra", clean.tetra_count())),
    );
    report.push("dual graph involution", dual_graph(&clean).is_involution(), String::new());

    let mut rng = ChaCha8Rng::seed_from_u64(config.lattice.defect_seed);
    let mut worst: f64 = 0.0;
    for _ in 0..16 {
        let p = [0; 3].map(|_| rng.gen_range(-3.0..3.0));
        worst = worst.max(walk_symbol(p, &params)?.unitarity_defect());
    }
    report.push("walk symbol unitarity", worst <= VALIDATE_TOL, format!("max defect {worst:.3e}"));

    let mut robust = RobustTetraField::zeros(&clean);
    robust.amps.iter_mut().for_each(|v| *v = C64::new(rng.gen(), rng.gen()));
    let shifted = robust_shift(&clean, &robust)?;
    let ancilla_ok = robust
        .amps
        .chunks(8)
        .zip(shifted.amps.chunks(8))
        .all(|(a, b)| a[4..] == b[4..]);
    report.push("robust ancilla invariance", ancilla_ok, String::new());

    let state = make_initial(config, Some(&clean)).or_else(|_| {
        let c = RunConfig { walk: WalkConfig { engine: Engine::Spinor, ..config.walk.clone() }, ..config.clone() };
        make_initial(&c, None)
    })?;
    let n0 = state.norm();
    let lat = match state {
        WalkState::Spinor(_) => None,
        _ => Some(&clean),
    };
    let n1 = advance(&state, &params, &params.coins()?, lat)?.norm();
    let drift = (n1 - n0).abs() / n0;
    report.push("one-step unitarity", drift <= VALIDATE_TOL, format!("relative drift {drift:.3e}"));

    let dims = config.lattice.dims;
    if dims[0] == dims[1] && dims[1] == dims[2] {
        let dirac = WalkParams {
            mode: Mode::Dirac4,
            variant: if config.walk.variant == Variant::Massless { Variant::PerSubstep } else { config.walk.variant },
            start_axis: Axis::Z,
            ..params
        };
        let dc = dirac.coins()?;
        let mut worst: f64 = 0.0;
        let mut worst_robust: f64 = 0.0;
        for _ in 0..3 {
            let mut t = TetraField::zeros(&clean);
            t.amps.iter_mut().for_each(|v| *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
            let lhs = gather(&step_dirac_tetra(&clean, &t, &dc, dirac.variant)?, &clean)?;
            let rhs = step_massive(&gather(&t, &clean)?, &dirac)?;
            worst = worst.max(lhs.max_abs_diff(&rhs));

            let massless = WalkParams { variant: Variant::Massless, mass: 0.0, mode: Mode::Robust4, ..dirac };
            let r = scatter_robust(&gather(&t, &clean)?, &clean)?;
            let lhs = gather_robust(&step_dirac_robust(&clean, &r, &massless.coins()?, Variant::Massless)?, &clean)?;
            let rhs = step(&gather_robust(&r, &clean)?, &massless)?;
            worst_robust = worst_robust.max(lhs.max_abs_diff(&rhs));
        }
        report.push("tetra/spinor equivalence", worst <= VALIDATE_TOL, format!("max difference {worst:.3e}"));
        report.push(
            "robust/spinor equivalence",
            worst_robust <= VALIDATE_TOL,
            format!("max difference {worst_robust:.3e}"),
        );
    } else {
        report.push("tetra/spinor equivalence", true, "skipped: dims not cubic".into());
    }
    Ok(report)
}

/// Refinement levels starting at the configured lattice: ε/2^i on N·2^i.
pub fn refinement_levels(config: &RunConfig, count: usize) -> Result<Vec<(f64, usize)>> {
    let d = config.lattice.dims;
    if d[0] != d[1] || d[1] != d[2] {
        return Err(WalkError::InvalidArgument("convergence study needs cubic dims".into()));
    }
    if count < 2 {
        return Err(WalkError::InvalidArgument("need at least two levels".into()));
    }
    Ok((0..count).map(|i| (config.lattice.eps / (1 << i) as f64, d[0] << i)).collect())
}
