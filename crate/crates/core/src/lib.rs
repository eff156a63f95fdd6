//! Discrete-time quantum walk on the tetrahedral tessellation of 3D space,
//! together with its effective cubic-lattice spinor form, an exact spectral
//! reference for the continuum Dirac equation, and batch I/O.

pub mod algebra;
pub mod cli_io;
pub mod error;
pub mod lattice;
pub mod reference;
pub mod spinor_model;
pub mod tetra_engine;

pub use error::{Result, WalkError};

/// Cartesian axis of the cubic grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }

    pub fn unit(self) -> [i64; 3] {
        let mut u = [0; 3];
        u[self.index()] = 1;
        u
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        }
    }
}
