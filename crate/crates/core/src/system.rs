//! The normalized ODE system
//!
//! ```text
//! y' = f0(x) - Lambda y - (1/x) B y + g(x, y),   g(x, y) = sum g_{m,l} x^-m y^l,
//! ```
//!
//! with `Lambda = diag(lambda)`, `lambda[0] = 1`, `B = diag(b)` and `beta = b[0]`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::C64;

/// A multi-index `l` (one exponent per component).
pub type MultiIndex = Vec<usize>;

/// Declared truncation of the Taylor table of `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub max_m: usize,
    pub max_l: usize,
}

/// Normalized system data. Immutable once built; share freely across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec {
    pub n: usize,
    pub lambda: Vec<C64>,
    pub b_diag: Vec<C64>,
    /// `f0(x) = sum_m f0[m] x^-m`.
    pub f0: BTreeMap<usize, Vec<C64>>,
    /// `g_{m,l}` keyed by `(m, l)`.
    pub g: BTreeMap<(usize, MultiIndex), Vec<C64>>,
    pub truncation: Truncation,
    /// Permits an `x^-1` forcing term (needed by the classical worked examples).
    pub allow_order_one_forcing: bool,
}

impl SystemSpec {
    pub fn beta(&self) -> C64 {
        self.b_diag[0]
    }

    /// `|l|` for a multi-index.
    pub fn degree(l: &[usize]) -> usize {
        l.iter().sum()
    }

    /// `true` when `g` has no entry of degree `>= 2` (the system is linear in `y`).
    pub fn is_linear(&self) -> bool {
        self.g.keys().all(|(_, l)| Self::degree(l) < 2)
    }

    /// Smallest angle between the Stokes direction (arg 0) and any other eigenvalue ray.
    pub fn eigen_ray_gap(&self) -> f64 {
        self.lambda
            .iter()
            .skip(1)
            .map(|l| {
                let a = arg_0_2pi(*l);
                a.min(2.0 * PI - a)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Parses and validates a JSON config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SystemConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let spec = cfg.into_spec()?;
        let violations = validate_system(&spec);
        if violations.is_empty() {
            Ok(spec)
        } else {
            Err(Error::InvalidSystem(violations))
        }
    }

    /// `g(x, y)` at a point.
    pub fn g_eval(&self, x: C64, y: &[C64]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.n];
        for ((m, l), coef) in &self.g {
            let mono = l.iter().zip(y).fold(x.powi(-(*m as i32)), |acc, (e, yi)| acc * yi.powu(*e as u32));
            for (o, c) in out.iter_mut().zip(coef) {
                *o += c * mono;
            }
        }
        out
    }

    /// Jacobian `d g / d y` at a point, row-major (`out[r][i] = d g_r / d y_i`).
    pub fn g_jacobian(&self, x: C64, y: &[C64]) -> Vec<Vec<C64>> {
        let mut out = vec![vec![C64::new(0.0, 0.0); self.n]; self.n];
        for ((m, l), coef) in &self.g {
            for i in 0..self.n {
                if l[i] == 0 {
                    continue;
                }
                let mut d = x.powi(-(*m as i32)) * l[i] as f64;
                for (j, (e, yj)) in l.iter().zip(y).enumerate() {
                    let e = if j == i { e - 1 } else { *e };
                    d *= yj.powu(e as u32);
                }
                for (r, c) in coef.iter().enumerate() {
                    out[r][i] += c * d;
                }
            }
        }
        out
    }

    /// Right-hand side `f0(x) - Lambda y - B y / x + g(x, y)`.
    pub fn rhs(&self, x: C64, y: &[C64]) -> Vec<C64> {
        let mut out = self.g_eval(x, y);
        for (r, o) in out.iter_mut().enumerate() {
            *o -= (self.lambda[r] + self.b_diag[r] / x) * y[r];
        }
        for (m, f) in &self.f0 {
            let xm = x.powi(-(*m as i32));
            for (o, c) in out.iter_mut().zip(f) {
                *o += c * xm;
            }
        }
        out
    }

    /// Emits the config document (inverse of [`SystemSpec::from_json`]).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SystemConfig::from_spec(self)).expect("config serializes")
    }
}

/// Loads a system from a JSON document; alias of [`SystemSpec::from_json`].
pub fn load_system(text: &str) -> Result<SystemSpec> {
    SystemSpec::from_json(text)
}

fn arg_0_2pi(z: C64) -> f64 {
    let a = z.arg();
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

fn is_nonzero(v: &[C64]) -> bool {
    v.iter().any(|z| *z != C64::new(0.0, 0.0))
}

/// Checks every invariant of [`SystemSpec`]; returns one message per violation.
pub fn validate_system(spec: &SystemSpec) -> Vec<String> {
    let mut out = Vec::new();
    let n = spec.n;
    if n == 0 {
        out.push("n: must be positive".to_string());
        return out;
    }
    if spec.lambda.len() != n {
        out.push(format!("lambda: expected {n} entries, found {}", spec.lambda.len()));
    }
    if spec.b_diag.len() != n {
        out.push(format!("b_diag: expected {n} entries, found {}", spec.b_diag.len()));
    }
    if !out.is_empty() {
        return out;
    }
    let all_finite = spec
        .lambda
        .iter()
        .chain(&spec.b_diag)
        .chain(spec.f0.values().flatten())
        .chain(spec.g.values().flatten())
        .all(|z| z.re.is_finite() && z.im.is_finite());
    if !all_finite {
        out.push("values: all coefficients must be finite".to_string());
    }

    if spec.lambda[0] != C64::new(1.0, 0.0) {
        out.push("lambda: lambda[0] must equal 1".to_string());
    }
    if spec.lambda.iter().any(|l| l.norm() == 0.0) {
        out.push("lambda: eigenvalues must be nonzero".to_string());
    }
    let args: Vec<f64> = spec.lambda.iter().map(|l| arg_0_2pi(*l)).collect();
    let mut resonant = false;
    for i in 0..n {
        for j in i + 1..n {
            if args[i] == args[j] {
                resonant = true;
            }
        }
    }
    if resonant {
        out.push("non-resonance violated".to_string());
    }
    if args.windows(2).any(|w| w[1] < w[0]) {
        out.push("lambda: arguments must be sorted strictly increasing".to_string());
    }

    let beta = spec.beta();
    if !(beta.re > 0.0 && beta.re <= 1.0) {
        out.push("Re(beta) out of (0,1]".to_string());
    }

    for (m, v) in &spec.f0 {
        if v.len() != n {
            out.push(format!("f0_coeffs[{m}]: expected {n} components"));
        }
        match m {
            0 => out.push("f0_coeffs: no entry allowed at m=0".to_string()),
            1 if !spec.allow_order_one_forcing => {
                out.push("f0_coeffs: entry at m=1 requires allow_order_one_forcing (f0 must be O(x^-2))".to_string())
            }
            _ => {}
        }
    }

    for ((m, l), v) in &spec.g {
        let deg = SystemSpec::degree(l);
        if l.len() != n {
            out.push(format!("g_table[m={m}, l={l:?}]: multi-index must have length {n}"));
            continue;
        }
        if v.len() != n {
            out.push(format!("g_table[m={m}, l={l:?}]: expected {n} components"));
        }
        if deg == 0 {
            out.push(format!("g_table[m={m}, l={l:?}]: |l| must be at least 1"));
        }
        if deg == 1 && *m <= 1 && is_nonzero(v) {
            out.push(format!("g_{{{m},l}} must vanish for |l|=1"));
        }
        if *m > spec.truncation.max_m || deg > spec.truncation.max_l {
            out.push(format!(
                "g_table[m={m}, l={l:?}]: exceeds declared truncation (max_m={}, max_l={})",
                spec.truncation.max_m, spec.truncation.max_l
            ));
        }
    }

    let order_one = spec.f0.get(&1).is_some_and(|v| is_nonzero(v));
    if order_one && spec.g.iter().any(|((m, l), v)| *m == 0 && SystemSpec::degree(l) == 2 && is_nonzero(v)) {
        out.push(
            "f0_coeffs: order-one forcing cannot be combined with g_{0,l}, |l|=2 (it shifts the effective B)"
                .to_string(),
        );
    }
    out
}

/// On-disk representation: complex numbers as `[re, im]`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemConfig {
    n: usize,
    lambda: Vec<[f64; 2]>,
    b_diag: Vec<[f64; 2]>,
    /// Optional full B matrix; accepted only if diagonal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b_matrix: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default)]
    f0_coeffs: BTreeMap<String, Vec<[f64; 2]>>,
    #[serde(default)]
    g_table: Vec<GEntryConfig>,
    truncation: Truncation,
    #[serde(default)]
    allow_order_one_forcing: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GEntryConfig {
    m: usize,
    l: MultiIndex,
    coeff: Vec<[f64; 2]>,
}

fn to_c(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|[re, im]| C64::new(*re, *im)).collect()
}

fn from_c(v: &[C64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

impl SystemConfig {
    fn into_spec(self) -> Result<SystemSpec> {
        if let Some(bm) = &self.b_matrix {
            for (i, row) in bm.iter().enumerate() {
                for (j, z) in row.iter().enumerate() {
                    if i != j && (z[0] != 0.0 || z[1] != 0.0) {
                        return Err(Error::InvalidSystem(vec![format!(
                            "b_matrix: non-diagonal B is not supported (entry [{i}][{j}])"
                        )]));
                    }
                    if i == j && self.b_diag.get(i) != Some(z) {
                        return Err(Error::InvalidSystem(vec![format!(
                            "b_matrix: diagonal entry {i} disagrees with b_diag"
                        )]));
                    }
                }
            }
        }
        let mut f0 = BTreeMap::new();
        for (key, v) in &self.f0_coeffs {
            let m: usize = key
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("f0_coeffs: key '{key}' is not a non-negative integer")))?;
            if f0.insert(m, to_c(v)).is_some() {
                return Err(Error::Parse(format!("f0_coeffs: duplicate key m={m}")));
            }
        }
        let mut g = BTreeMap::new();
        for e in self.g_table {
            let key = (e.m, e.l);
            if g.contains_key(&key) {
                return Err(Error::Parse(format!("g_table: duplicate entry m={}, l={:?}", key.0, key.1)));
            }
            g.insert(key, to_c(&e.coeff));
        }
        Ok(SystemSpec {
            n: self.n,
            lambda: to_c(&self.lambda),
            b_diag: to_c(&self.b_diag),
            f0,
            g,
            truncation: self.truncation,
            allow_order_one_forcing: self.allow_order_one_forcing,
        })
    }

    fn from_spec(spec: &SystemSpec) -> Self {
        SystemConfig {
            n: spec.n,
            lambda: from_c(&spec.lambda),
            b_diag: from_c(&spec.b_diag),
            b_matrix: None,
            f0_coeffs: spec.f0.iter().map(|(m, v)| (m.to_string(), from_c(v))).collect(),
            g_table: spec.g.iter().map(|((m, l), v)| GEntryConfig { m: *m, l: l.clone(), coeff: from_c(v) }).collect(),
            truncation: spec.truncation,
            allow_order_one_forcing: spec.allow_order_one_forcing,
        }
    }
}
