//! Tunable parameters of the decomposition and fusion pipeline.
//!
//! The on-disk form is flat `key=value` text. Lines starting with `#` are
//! comments, blank lines are ignored and unknown keys are rejected.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{FusionError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Pixels per patch (`b*b` for a square patch of side `b`).
    pub patch_dim: usize,
    /// Atoms per dictionary.
    pub dict_atoms: usize,
    /// Outer decomposition iterations.
    pub outer_iters: usize,
    /// Maximum nonzeros per code column.
    pub sparsity_t: usize,
    /// Quadratic-penalty weight.
    pub rho: f64,
    /// Absolute residual-norm threshold of the sparse coder.
    pub epsilon: f64,
    /// Floor on the per-patch variance product.
    pub delta: f64,
    /// Step between patch positions.
    pub stride: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            patch_dim: 64,
            dict_atoms: 128,
            outer_iters: 5,
            sparsity_t: 5,
            rho: 10.0,
            epsilon: 1e-4,
            delta: 1e-7,
            stride: 1,
        }
    }
}

const KEYS: [&str; 8] = [
    "patch_dim",
    "dict_atoms",
    "outer_iters",
    "sparsity_T",
    "rho",
    "epsilon",
    "delta",
    "stride",
];

impl FusionConfig {
    /// Side length of the square patch.
    pub fn patch_side(&self) -> usize {
        exact_sqrt(self.patch_dim).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |key, message: &str| {
            Err(FusionError::InvalidConfig {
                key,
                message: message.to_string(),
            })
        };
        if self.patch_dim == 0 {
            return invalid("patch_dim", "must be ≥ 1");
        }
        if exact_sqrt(self.patch_dim).is_none() {
            return invalid("patch_dim", "must be a perfect square");
        }
        if self.dict_atoms == 0 {
            return invalid("dict_atoms", "must be ≥ 1");
        }
        if self.outer_iters == 0 {
            return invalid("outer_iters", "must be ≥ 1");
        }
        if self.sparsity_t == 0 {
            return invalid("sparsity_T", "must be ≥ 1");
        }
        if self.sparsity_t > self.dict_atoms {
            return invalid("sparsity_T", "must be ≤ dict_atoms");
        }
        if self.sparsity_t > self.patch_dim {
            return invalid("sparsity_T", "must be ≤ patch_dim");
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return invalid("rho", "must be a finite value > 0");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return invalid("epsilon", "must be a finite value > 0");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return invalid("delta", "must be a finite value > 0");
        }
        if self.stride == 0 {
            return invalid("stride", "must be ≥ 1");
        }
        if self.stride > self.patch_side() {
            return invalid("stride", "must not exceed the patch side");
        }
        Ok(())
    }

    /// Parses `key=value` text. Absent keys keep their defaults.
    pub fn parse(source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = [false; KEYS.len()];
        for (idx, raw) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| FusionError::ConfigParse {
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
            let key = key.trim();
            let value = value.trim();
            let slot = KEYS
                .iter()
                .position(|k| *k == key)
                .ok_or_else(|| parse_err(format!("unknown key {key:?}")))?;
            if std::mem::replace(&mut seen[slot], true) {
                return Err(parse_err(format!("duplicate key {key:?}")));
            }
            match key {
                "patch_dim" => cfg.patch_dim = parse_usize(key, value, line_no)?,
                "dict_atoms" => cfg.dict_atoms = parse_usize(key, value, line_no)?,
                "outer_iters" => cfg.outer_iters = parse_usize(key, value, line_no)?,
                "sparsity_T" => cfg.sparsity_t = parse_usize(key, value, line_no)?,
                "stride" => cfg.stride = parse_usize(key, value, line_no)?,
                "rho" => cfg.rho = parse_f64(key, value, line_no)?,
                "epsilon" => cfg.epsilon = parse_f64(key, value, line_no)?,
                "delta" => cfg.delta = parse_f64(key, value, line_no)?,
                _ => unreachable!(),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes every field; `parse(to_kv_string())` reproduces `self`.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        // `{:?}` on f64 prints the shortest representation that round-trips.
        let _ = writeln!(out, "patch_dim={}", self.patch_dim);
        let _ = writeln!(out, "dict_atoms={}", self.dict_atoms);
        let _ = writeln!(out, "outer_iters={}", self.outer_iters);
        let _ = writeln!(out, "sparsity_T={}", self.sparsity_t);
        let _ = writeln!(out, "rho={:?}", self.rho);
        let _ = writeln!(out, "epsilon={:?}", self.epsilon);
        let _ = writeln!(out, "delta={:?}", self.delta);
        let _ = writeln!(out, "stride={}", self.stride);
        out
    }
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<usize> {
    value.parse().map_err(|_| FusionError::ConfigParse {
        line,
        message: format!("{key}: expected a non-negative integer, got {value:?}"),
    })
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64> {
    value.parse().map_err(|_| FusionError::ConfigParse {
        line,
        message: format!("{key}: expected a real number, got {value:?}"),
    })
}

pub(crate) fn exact_sqrt(v: usize) -> Option<usize> {
    let r = (v as f64).sqrt().round() as usize;
    (r * r == v).then_some(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_source_gives_defaults() {
        let cfg = FusionConfig::parse("").unwrap();
        assert_eq!(cfg.patch_dim, 64);
        assert_eq!(cfg.dict_atoms, 128);
        assert_eq!(cfg.outer_iters, 5);
        assert_eq!(cfg.sparsity_t, 5);
        assert_eq!(cfg.rho, 10.0);
        assert_eq!(cfg.epsilon, 1e-4);
        assert_eq!(cfg.delta, 1e-7);
        assert_eq!(cfg.stride, 1);
        assert_eq!(cfg, FusionConfig::default());
    }

    #[test]
    fn zero_sparsity_rejected() {
        let err = FusionConfig::parse("sparsity_T=0").unwrap_err();
        assert_eq!(err.to_string(), "sparsity_T must be ≥ 1");
    }

    #[test]
    fn non_square_patch_rejected() {
        let err = FusionConfig::parse("patch_dim=60").unwrap_err();
        assert_eq!(err.to_string(), "patch_dim must be a perfect square");
    }

    #[test]
    fn comments_and_whitespace() {
        let cfg = FusionConfig::parse("# preview\n\n  stride = 4 \nrho=2.5\n").unwrap();
        assert_eq!(cfg.stride, 4);
        assert_eq!(cfg.rho, 2.5);
        assert_eq!(cfg.patch_side(), 8);
    }

    #[test]
    fn unknown_and_malformed_keys() {
        assert!(matches!(
            FusionConfig::parse("lambda=3"),
            Err(FusionError::ConfigParse { line: 1, .. })
        ));
        assert!(FusionConfig::parse("rho").is_err());
        assert!(FusionConfig::parse("rho=abc").is_err());
        assert!(FusionConfig::parse("stride=1\nstride=2").is_err());
    }

    #[test]
    fn cross_field_invariants() {
        let err = FusionConfig::parse("patch_dim=4\nsparsity_T=5").unwrap_err();
        assert!(err.to_string().starts_with("sparsity_T"));
        let err = FusionConfig::parse("dict_atoms=3").unwrap_err();
        assert!(err.to_string().starts_with("sparsity_T"));
        for (src, key) in [("rho=0", "rho"), ("epsilon=-1", "epsilon"), ("delta=0", "delta"), ("stride=0", "stride"), ("stride=9", "stride")] {
            let err = FusionConfig::parse(src).unwrap_err();
            assert!(err.to_string().starts_with(key), "{src}: {err}");
        }
    }

    proptest! {
        #[test]
        fn reload_is_idempotent(
            side in 2usize..12,
            extra_atoms in 0usize..200,
            outer in 1usize..20,
            t in 1usize..4,
            rho in 1e-3f64..1e4,
            eps in 1e-9f64..1.0,
            delta in 1e-12f64..1.0,
            stride in 1usize..12,
        ) {
            prop_assume!(stride <= side);
            let patch_dim = side * side;
            let cfg = FusionConfig {
                patch_dim,
                dict_atoms: patch_dim + extra_atoms,
                outer_iters: outer,
                sparsity_t: t,
                rho,
                epsilon: eps,
                delta,
                stride,
            };
            let once = FusionConfig::parse(&cfg.to_kv_string()).unwrap();
            prop_assert_eq!(once, cfg);
            let twice = FusionConfig::parse(&once.to_kv_string()).unwrap();
            prop_assert_eq!(twice, once);
        }
    }
}
