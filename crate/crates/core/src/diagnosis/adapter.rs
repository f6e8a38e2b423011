use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::types::{DiseaseId, SymptomId};

/// Low-rank additive correction to the reference scorer.
///
/// The correction for `(d, s)` is `U[d] · V[s]`, plus a per-disease bias on
/// the logit margin.
#[derive(Debug, Clone, PartialEq)]
pub struct Adapter {
    n: usize,
    m: usize,
    rank: usize,
    pub(crate) u: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl Adapter {
    pub const DEFAULT_RANK: usize = 16;

    /// All-zero adapter. Neither factor receives gradient from this state,
    /// so use [`Adapter::init`] for training.
    pub fn zeros(n: usize, m: usize, rank: usize) -> Self {
        let rank = rank.max(1);
        Self {
            n,
            m,
            rank,
            u: vec![0.0; n * rank],
            v: vec![0.0; m * rank],
            bias: vec![0.0; n],
        }
    }

    /// Trainable initialisation: `U = 0`, `V ~ N(0, 1/rank)`, so the
    /// correction starts at exactly zero.
    pub fn init(n: usize, m: usize, rank: usize, seed: u64) -> Self {
        let mut a = Self::zeros(n, m, rank);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / a.rank as f64).sqrt()).unwrap();
        for x in a.v.iter_mut() {
            *x = normal.sample(&mut rng);
        }
        a
    }

    pub fn disease_count(&self) -> usize {
        self.n
    }

    pub fn symptom_count(&self) -> usize {
        self.m
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn set_bias(&mut self, bias: Vec<f64>) -> Result<()> {
        if bias.len() != self.n {
            return Err(Error::LengthMismatch(bias.len(), self.n));
        }
        self.bias = bias;
        Ok(())
    }

    pub fn delta(&self, d: DiseaseId, s: SymptomId) -> f64 {
        let r = self.rank;
        let u = &self.u[d.0 * r..(d.0 + 1) * r];
        let v = &self.v[s.0 * r..(s.0 + 1) * r];
        u.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.u.len() + self.v.len() + self.bias.len()
    }

    /// Flat view in the order bias, U, V.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = self.bias.clone();
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.parameter_count() {
            return Err(Error::LengthMismatch(flat.len(), self.parameter_count()));
        }
        let (b, rest) = flat.split_at(self.n);
        let (u, v) = rest.split_at(self.u.len());
        self.bias.copy_from_slice(b);
        self.u.copy_from_slice(u);
        self.v.copy_from_slice(v);
        Ok(())
    }

    /// Text checkpoint: a `adapter n m r` header, then the bias row, the `n`
    /// rows of U and the `m` rows of V.
    pub fn to_text(&self) -> String {
        let mut out = format!("adapter {} {} {}\n", self.n, self.m, self.rank);
        let mut line = |vals: &[f64]| {
            let row: Vec<String> = vals.iter().map(|x| x.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        };
        line(&self.bias);
        for row in self.u.chunks(self.rank) {
            line(row);
        }
        for row in self.v.chunks(self.rank) {
            line(row);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let parse_err = |line: usize, message: String| Error::Parse {
            line: line + 1,
            message,
        };
        let (hl, header) = lines.next().ok_or_else(|| parse_err(0, "empty checkpoint".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "adapter" {
            return Err(parse_err(hl, "expected `adapter n m r` header".into()));
        }
        let dims: Vec<usize> = fields[1..]
            .iter()
            .map(|f| f.parse().map_err(|e| parse_err(hl, format!("{e}"))))
            .collect::<Result<_>>()?;
        let (n, m, rank) = (dims[0], dims[1], dims[2]);
        let mut a = Adapter::zeros(n, m, rank);
        let mut read_row = |want: usize| -> Result<Vec<f64>> {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| parse_err(usize::MAX - 1, "truncated checkpoint".into()))?;
            let row: Vec<f64> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|e| parse_err(ln, format!("{e}"))))
                .collect::<Result<_>>()?;
            if row.len() != want {
                return Err(parse_err(ln, format!("expected {want} values, got {}", row.len())));
            }
            Ok(row)
        };
        a.bias = read_row(n)?;
        a.u = (0..n).map(|_| read_row(rank)).collect::<Result<Vec<_>>>()?.concat();
        a.v = (0..m).map(|_| read_row(rank)).collect::<Result<Vec<_>>>()?.concat();
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
