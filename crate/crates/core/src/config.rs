//! Declarative descriptions of systems, potentials and samples.
//!
//! These are the `[system]`, `[potential]` and `[sample]` tables of a run
//! configuration. Each is tagged by a `kind` key.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::SampleKind;
use crate::system::{
    make_finite_system, make_full_shift, make_grid_shift, FiniteSystem, FullShift, GridShift, Potential, SystemRef,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    OnePoint,
    Finite {
        matrix: Vec<Vec<f64>>,
        map: Vec<usize>,
    },
    RandomFinite {
        points: usize,
        seed: u64,
    },
    FullShift {
        m: usize,
        #[serde(rename = "L")]
        len: usize,
    },
    GridShift {
        #[serde(rename = "D")]
        dim: usize,
        m: usize,
        #[serde(rename = "L")]
        len: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `f ≡ value`.
    Constant { value: f64 },
    /// First coordinate of the first letter (shift systems).
    Coord0,
    /// Value determined by the first letter (full shift).
    Letter { values: Vec<f64> },
    /// Value per point (finite systems).
    Table { values: Vec<f64> },
    /// Seeded values uniform in `[-scale, scale]` (finite systems).
    Random { seed: u64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleSpec {
    Uniform { size: usize, seed: u64 },
    Exhaustive { limit: Option<usize> },
}

/// Default cap on exhaustive enumeration.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 1 << 20;

impl SampleSpec {
    pub fn kind(&self) -> SampleKind {
        match *self {
            SampleSpec::Uniform { size, seed } => SampleKind::Uniform { count: size, seed },
            SampleSpec::Exhaustive { limit } => SampleKind::Exhaustive {
                limit: limit.unwrap_or(DEFAULT_EXHAUSTIVE_LIMIT),
            },
        }
    }
}

#[derive(Clone, Debug)]
enum Concrete {
    Finite(FiniteSystem),
    Shift(FullShift),
    Grid(GridShift),
}

/// A constructed system that still knows its concrete type, so potentials
/// that depend on the presentation can be built.
#[derive(Clone, Debug)]
pub struct BuiltSystem {
    system: SystemRef,
    concrete: Concrete,
}

impl BuiltSystem {
    pub fn system(&self) -> &SystemRef {
        &self.system
    }

    pub fn finite(&self) -> Option<&FiniteSystem> {
        match &self.concrete {
            Concrete::Finite(f) => Some(f),
            _ => None,
        }
    }
}

pub fn build_system(spec: &SystemSpec) -> Result<BuiltSystem> {
    let concrete = match spec {
        SystemSpec::OnePoint => Concrete::Finite(FiniteSystem::one_point()),
        SystemSpec::Finite { matrix, map } => Concrete::Finite(make_finite_system(matrix.clone(), map.clone())?),
        SystemSpec::RandomFinite { points, seed } => Concrete::Finite(FiniteSystem::random(*points, *seed)?),
        SystemSpec::FullShift { m, len } => Concrete::Shift(make_full_shift(*m, *len)?),
        SystemSpec::GridShift { dim, m, len } => Concrete::Grid(make_grid_shift(*dim, *m, *len)?),
    };
    let system: SystemRef = match &concrete {
        Concrete::Finite(f) => Arc::new(f.clone()),
        Concrete::Shift(s) => Arc::new(s.clone()),
        Concrete::Grid(g) => Arc::new(g.clone()),
    };
    Ok(BuiltSystem { system, concrete })
}

pub fn build_potential(spec: &PotentialSpec, sys: &BuiltSystem) -> Result<Potential> {
    let unsupported = |what: &str| {
        Error::Config(format!(
            "potential kind `{what}` is not available on system {}",
            sys.system.name()
        ))
    };
    match (spec, &sys.concrete) {
        (PotentialSpec::Constant { value }, _) => {
            if !value.is_finite() {
                return Err(Error::Config("constant potential must be finite".into()));
            }
            Ok(Potential::constant(*value))
        }
        (PotentialSpec::Coord0, Concrete::Shift(s)) => Ok(s.coord0()),
        (PotentialSpec::Coord0, Concrete::Grid(g)) => Ok(g.coord0()),
        (PotentialSpec::Coord0, _) => Err(unsupported("coord0")),
        (PotentialSpec::Letter { values }, Concrete::Shift(s)) => s.letter_potential(values.clone()),
        (PotentialSpec::Letter { .. }, _) => Err(unsupported("letter")),
        (PotentialSpec::Table { values }, Concrete::Finite(f)) => f.potential(values.clone(), "table"),
        (PotentialSpec::Table { .. }, _) => Err(unsupported("table")),
        (PotentialSpec::Random { seed, scale }, Concrete::Finite(f)) => f.random_potential(*seed, *scale),
        (PotentialSpec::Random { .. }, _) => Err(unsupported("random")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tagged_tables() {
        let s: SystemSpec = toml::from_str("kind = \"full_shift\"\nm = 2\nL = 12\n").unwrap();
        assert_eq!(s, SystemSpec::FullShift { m: 2, len: 12 });
        let g: SystemSpec = toml::from_str("kind = \"grid_shift\"\nD = 1\nm = 17\nL = 9\n").unwrap();
        assert_eq!(g, SystemSpec::GridShift { dim: 1, m: 17, len: 9 });
        let p: PotentialSpec = toml::from_str("kind = \"letter\"\nvalues = [1.0, 2.0]\n").unwrap();
        assert_eq!(p, PotentialSpec::Letter { values: vec![1.0, 2.0] });
        let e: SampleSpec = toml::from_str("kind = \"exhaustive\"\n").unwrap();
        assert_eq!(e, SampleSpec::Exhaustive { limit: None });
    }

    #[test]
    fn rejects_unknown_keys_and_kinds() {
        assert!(toml::from_str::<SystemSpec>("kind = \"full_shift\"\nm = 2\nL = 12\nzzz = 1\n").is_err());
        assert!(toml::from_str::<SystemSpec>("kind = \"torus\"\n").is_err());
    }

    #[test]
    fn potentials_require_matching_system() {
        let fin = build_system(&SystemSpec::RandomFinite { points: 4, seed: 1 }).unwrap();
        assert!(build_potential(&PotentialSpec::Coord0, &fin).is_err());
        assert!(build_potential(&PotentialSpec::Random { seed: 3, scale: 1.0 }, &fin).is_ok());
        let shift = build_system(&SystemSpec::FullShift { m: 2, len: 8 }).unwrap();
        assert!(build_potential(&PotentialSpec::Table { values: vec![0.0] }, &shift).is_err());
        let f = build_potential(&PotentialSpec::Letter { values: vec![0.0, 1.0] }, &shift).unwrap();
        assert_eq!(f.lip_f(), 1.0);
    }

    #[test]
    fn round_trips_through_json() {
        let s = SystemSpec::Finite {
            matrix: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            map: vec![1, 0],
        };
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<SystemSpec>(&j).unwrap(), s);
    }
}
