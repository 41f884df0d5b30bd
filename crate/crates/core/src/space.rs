//! Mixed search spaces and the warping between raw parameter values and the
//! unit cube the surrogate and trust region operate in.
//!
//! Dimensions are partitioned into three blocks: real parameters (x-block),
//! integer parameters (y-block) and qualitative parameters, i.e. booleans and
//! categoricals (z-block). A qualitative parameter occupies a single warped
//! coordinate holding its arm index scaled by `1 / (K - 1)`.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamKind {
    Real { lo: f64, hi: f64, scale: Scale },
    Integer { lo: i64, hi: i64, scale: Scale },
    Boolean,
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Real,
    Integer,
    Qualitative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub kind: ParamKind,
}

impl ParamSpec {
    pub fn real(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Real { lo, hi, scale: Scale::Linear } }
    }

    pub fn real_log(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        Self { name: name.into(), kind: ParamKind::Real { lo, hi, scale: Scale::Log } }
    }

    pub fn integer(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::Integer { lo, hi, scale: Scale::Linear } }
    }

    pub fn integer_log(name: impl Into<String>, lo: i64, hi: i64) -> Self {
        Self { name: name.into(), kind: ParamKind::Integer { lo, hi, scale: Scale::Log } }
    }

    pub fn boolean(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ParamKind::Boolean }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Categorical { categories: categories.into_iter().map(Into::into).collect() },
        }
    }

    pub fn block(&self) -> Block {
        match self.kind {
            ParamKind::Real { .. } => Block::Real,
            ParamKind::Integer { .. } => Block::Integer,
            ParamKind::Boolean | ParamKind::Categorical { .. } => Block::Qualitative,
        }
    }

    /// Number of arms for a qualitative parameter, `None` otherwise.
    pub fn arm_count(&self) -> Option<usize> {
        match &self.kind {
            ParamKind::Boolean => Some(2),
            ParamKind::Categorical { categories } => Some(categories.len()),
            _ => None,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::Space(format!("parameter `{}`: {reason}", self.name)));
        if self.name.is_empty() {
            return Err(Error::Space("parameter with empty name".into()));
        }
        match &self.kind {
            ParamKind::Real { lo, hi, scale } => {
                if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                    return bad("requires finite lo < hi");
                }
                if *scale == Scale::Log && *lo <= 0.0 {
                    return bad("log scale requires lo > 0");
                }
            }
            ParamKind::Integer { lo, hi, scale } => {
                if lo >= hi {
                    return bad("requires lo < hi");
                }
                if *scale == Scale::Log && *lo <= 0 {
                    return bad("log scale requires lo > 0");
                }
            }
            ParamKind::Boolean => {}
            ParamKind::Categorical { categories } => {
                if categories.len() < 2 {
                    return bad("needs at least 2 categories");
                }
                for (i, c) in categories.iter().enumerate() {
                    if categories[..i].contains(c) {
                        return bad(&format!("duplicate category `{c}`"));
                    }
                }
            }
        }
        Ok(())
    }

    fn warp_value(&self, value: &Value) -> Result<f64> {
        let invalid = |reason: String| Error::Validation { param: self.name.clone(), reason };
        match (&self.kind, value) {
            (ParamKind::Real { lo, hi, scale }, v) => {
                let v = match v {
                    Value::Real(v) => *v,
                    Value::Integer(i) => *i as f64,
                    other => return Err(invalid(format!("expected a real number, got {other}"))),
                };
                if !(v >= *lo && v <= *hi) {
                    return Err(invalid(format!("{v} outside [{lo}, {hi}]")));
                }
                Ok(to_unit(v, *lo, *hi, *scale))
            }
            (ParamKind::Integer { lo, hi, scale }, v) => {
                let v = match v {
                    Value::Integer(i) => *i,
                    Value::Real(r) if r.fract() == 0.0 && r.abs() < 9.0e15 => *r as i64,
                    other => return Err(invalid(format!("expected an integer, got {other}"))),
                };
                if v < *lo || v > *hi {
                    return Err(invalid(format!("{v} outside [{lo}, {hi}]")));
                }
                Ok(to_unit(v as f64, *lo as f64, *hi as f64, *scale))
            }
            (ParamKind::Boolean, Value::Bool(b)) => Ok(if *b { 1.0 } else { 0.0 }),
            (ParamKind::Categorical { categories }, Value::Category(c)) => {
                let idx = categories
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| invalid(format!("unknown category `{c}`")))?;
                Ok(idx as f64 / (categories.len() - 1) as f64)
            }
            (ParamKind::Boolean, other) => Err(invalid(format!("expected a boolean, got {other}"))),
            (ParamKind::Categorical { .. }, other) => Err(invalid(format!("expected a category label, got {other}"))),
        }
    }

    fn unwarp_coord(&self, u: f64) -> Value {
        let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
        match &self.kind {
            ParamKind::Real { lo, hi, scale } => Value::Real(from_unit(u, *lo, *hi, *scale)),
            ParamKind::Integer { lo, hi, scale } => Value::Integer(nearest_integer(u, *lo, *hi, *scale)),
            ParamKind::Boolean => Value::Bool(u > 0.5),
            ParamKind::Categorical { categories } => {
                Value::Category(categories[nearest_arm(u, categories.len())].clone())
            }
        }
    }

    /// Maps a uniform draw to a value giving equal mass to every discrete
    /// value (integer lattice points on linear scale, arms).
    fn from_uniform(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            ParamKind::Integer { lo, hi, scale: Scale::Linear } => {
                let n = (hi - lo + 1) as f64;
                Value::Integer(lo + ((u * n).floor() as i64).min(hi - lo))
            }
            ParamKind::Boolean => Value::Bool(u >= 0.5),
            ParamKind::Categorical { categories } => {
                let k = categories.len();
                Value::Category(categories[((u * k as f64).floor() as usize).min(k - 1)].clone())
            }
            _ => self.unwarp_coord(u),
        }
    }
}

fn to_unit(v: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    let u = match scale {
        Scale::Linear => (v - lo) / (hi - lo),
        Scale::Log => (v / lo).ln() / (hi / lo).ln(),
    };
    u.clamp(0.0, 1.0)
}

fn from_unit(u: f64, lo: f64, hi: f64, scale: Scale) -> f64 {
    let v = match scale {
        Scale::Linear => lo + u * (hi - lo),
        Scale::Log => lo * (hi / lo).powf(u),
    };
    v.clamp(lo, hi)
}

/// Nearest arm index for a scaled coordinate, ties toward the lower index.
pub(crate) fn nearest_arm(u: f64, k: usize) -> usize {
    let t = u.clamp(0.0, 1.0) * (k - 1) as f64;
    ((t - 0.5).ceil().max(0.0) as usize).min(k - 1)
}

/// Nearest integer in warped distance, ties toward the lower value.
fn nearest_integer(u: f64, lo: i64, hi: i64, scale: Scale) -> i64 {
    let (lof, hif) = (lo as f64, hi as f64);
    match scale {
        Scale::Linear => {
            let t = u * (hif - lof);
            (lo + (t - 0.5).ceil().max(0.0) as i64).min(hi)
        }
        Scale::Log => {
            let raw = from_unit(u, lof, hif, scale);
            let below = (raw.floor() as i64).clamp(lo, hi);
            let above = (below + 1).min(hi);
            let d_below = (u - to_unit(below as f64, lof, hif, scale)).abs();
            let d_above = (to_unit(above as f64, lof, hif, scale) - u).abs();
            if d_above < d_below {
                above
            } else {
                below
            }
        }
    }
}

/// A concrete parameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Integer(i64),
    Real(f64),
    Category(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Real(r) => write!(f, "{r}"),
            Value::Category(c) => write!(f, "\"{c}\""),
        }
    }
}

/// A configuration: one value per parameter, keyed by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    pub values: BTreeMap<String, Value>,
}

impl Point {
    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn real(&self, name: &str) -> f64 {
        match self.values.get(name) {
            Some(Value::Real(v)) => *v,
            Some(Value::Integer(i)) => *i as f64,
            other => panic!("parameter `{name}` is not real: {other:?}"),
        }
    }

    pub fn integer(&self, name: &str) -> i64 {
        match self.values.get(name) {
            Some(Value::Integer(i)) => *i,
            other => panic!("parameter `{name}` is not an integer: {other:?}"),
        }
    }

    pub fn boolean(&self, name: &str) -> bool {
        match self.values.get(name) {
            Some(Value::Bool(b)) => *b,
            other => panic!("parameter `{name}` is not a boolean: {other:?}"),
        }
    }

    pub fn category(&self, name: &str) -> &str {
        match self.values.get(name) {
            Some(Value::Category(c)) => c,
            other => panic!("parameter `{name}` is not categorical: {other:?}"),
        }
    }
}

impl FromIterator<(String, Value)> for Point {
    fn from_iter<I: IntoIterator<Item = (String, Value)>>(iter: I) -> Self {
        Point { values: iter.into_iter().collect() }
    }
}

/// Unit-cube image of a point, coordinates in parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedVector(pub Vec<f64>);

impl WarpedVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Warped vector split into kernel blocks. Qualitative coordinates are
/// decoded into arm indices.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockInput {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
    x_idx: Vec<usize>,
    y_idx: Vec<usize>,
    z_idx: Vec<usize>,
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Space("search space has no parameters".into()));
        }
        for (i, p) in params.iter().enumerate() {
            p.check()?;
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::Space(format!("duplicate parameter name `{}`", p.name)));
            }
        }
        let idx = |b: Block| params.iter().enumerate().filter(|(_, p)| p.block() == b).map(|(i, _)| i).collect();
        Ok(Self {
            x_idx: idx(Block::Real),
            y_idx: idx(Block::Integer),
            z_idx: idx(Block::Qualitative),
            params,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Space(e.to_string()))
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn real_indices(&self) -> &[usize] {
        &self.x_idx
    }

    pub fn integer_indices(&self) -> &[usize] {
        &self.y_idx
    }

    pub fn qualitative_indices(&self) -> &[usize] {
        &self.z_idx
    }

    /// Arm counts of the z-block, in z-block order.
    pub fn arm_counts(&self) -> Vec<usize> {
        self.z_idx.iter().map(|&i| self.params[i].arm_count().unwrap_or(2)).collect()
    }

    /// Checks a point and normalizes numeric representations (integral reals
    /// for integer parameters, integers for real parameters).
    pub fn validate(&self, p: &Point) -> Result<Point> {
        if let Some(extra) = p.values.keys().find(|k| !self.params.iter().any(|q| &q.name == *k)) {
            return Err(Error::Validation { param: extra.clone(), reason: "not part of the search space".into() });
        }
        self.warp(p)?;
        let mut out = Point::default();
        for spec in &self.params {
            let v = p.values.get(&spec.name).expect("checked by warp").clone();
            let v = match (&spec.kind, v) {
                (ParamKind::Real { .. }, Value::Integer(i)) => Value::Real(i as f64),
                (ParamKind::Integer { .. }, Value::Real(r)) => Value::Integer(r as i64),
                (_, v) => v,
            };
            out.values.insert(spec.name.clone(), v);
        }
        Ok(out)
    }

    pub fn point_from_json(&self, json: &serde_json::Value) -> Result<Point> {
        let p: Point = serde_json::from_value(json.clone()).map_err(|e| Error::Input(format!("malformed point: {e}")))?;
        self.validate(&p)
    }

    pub fn warp(&self, p: &Point) -> Result<WarpedVector> {
        let mut coords = Vec::with_capacity(self.dim());
        for spec in &self.params {
            let v = p.values.get(&spec.name).ok_or_else(|| Error::Validation {
                param: spec.name.clone(),
                reason: "missing value".into(),
            })?;
            coords.push(spec.warp_value(v)?);
        }
        if p.values.len() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: p.values.len() });
        }
        Ok(WarpedVector(coords))
    }

    pub fn unwarp(&self, w: &WarpedVector) -> Result<Point> {
        if w.len() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: w.len() });
        }
        Ok(self
            .params
            .iter()
            .zip(&w.0)
            .map(|(spec, &u)| (spec.name.clone(), spec.unwarp_coord(u)))
            .collect())
    }

    /// Rounds a warped vector onto the lattice of representable points.
    pub fn snap(&self, w: &WarpedVector) -> Result<WarpedVector> {
        self.warp(&self.unwarp(w)?)
    }

    /// Maps a point of `[0,1)^D` to a configuration, giving every discrete
    /// value equal mass. Used for uniform sampling and space-filling designs.
    pub fn from_unit_cube(&self, u: &[f64]) -> Result<Point> {
        if u.len() != self.dim() {
            return Err(Error::Shape { expected: self.dim(), got: u.len() });
        }
        Ok(self.params.iter().zip(u).map(|(spec, &u)| (spec.name.clone(), spec.from_uniform(u))).collect())
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let u: Vec<f64> = (0..self.dim()).map(|_| rng.random::<f64>()).collect();
        self.from_unit_cube(&u).expect("dimension matches")
    }

    /// Splits a warped vector into kernel blocks. With `raw_integers`, the
    /// y-block carries the raw integer values instead of warped coordinates.
    pub fn blocks(&self, w: &[f64], raw_integers: bool) -> BlockInput {
        let y = self
            .y_idx
            .iter()
            .map(|&i| {
                if raw_integers {
                    match self.params[i].unwarp_coord(w[i]) {
                        Value::Integer(v) => v as f64,
                        _ => unreachable!(),
                    }
                } else {
                    w[i]
                }
            })
            .collect();
        BlockInput {
            x: self.x_idx.iter().map(|&i| w[i]).collect(),
            y,
            z: self
                .z_idx
                .iter()
                .map(|&i| nearest_arm(w[i], self.params[i].arm_count().unwrap_or(2)))
                .collect(),
        }
    }

    /// Warped coordinate of arm `arm` for the `j`-th qualitative parameter.
    pub fn arm_coordinate(&self, j: usize, arm: usize) -> f64 {
        let k = self.params[self.z_idx[j]].arm_count().unwrap_or(2);
        arm as f64 / (k - 1) as f64
    }
}

#[derive(Serialize, Deserialize)]
struct RawParam {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    categories: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
struct RawSpace {
    params: Vec<RawParam>,
}

impl TryFrom<RawParam> for ParamSpec {
    type Error = Error;

    fn try_from(r: RawParam) -> Result<Self> {
        let need = |v: Option<f64>, field: &str| {
            v.ok_or_else(|| Error::Space(format!("parameter `{}` is missing `{field}`", r.name)))
        };
        let kind = match r.kind.as_str() {
            "real" => ParamKind::Real { lo: need(r.lo, "lo")?, hi: need(r.hi, "hi")?, scale: r.scale.unwrap_or_default() },
            "integer" => {
                let (lo, hi) = (need(r.lo, "lo")?, need(r.hi, "hi")?);
                if lo.fract() != 0.0 || hi.fract() != 0.0 {
                    return Err(Error::Space(format!("parameter `{}`: integer bounds must be integral", r.name)));
                }
                ParamKind::Integer { lo: lo as i64, hi: hi as i64, scale: r.scale.unwrap_or_default() }
            }
            "boolean" | "bool" => ParamKind::Boolean,
            "categorical" | "cat" => ParamKind::Categorical {
                categories: r
                    .categories
                    .ok_or_else(|| Error::Space(format!("parameter `{}` is missing `categories`", r.name)))?,
            },
            other => return Err(Error::Space(format!("parameter `{}` has unknown kind `{other}`", r.name))),
        };
        Ok(ParamSpec { name: r.name, kind })
    }
}

impl From<&ParamSpec> for RawParam {
    fn from(p: &ParamSpec) -> Self {
        let mut raw = RawParam { name: p.name.clone(), kind: String::new(), lo: None, hi: None, scale: None, categories: None };
        match &p.kind {
            ParamKind::Real { lo, hi, scale } => {
                raw.kind = "real".into();
                (raw.lo, raw.hi, raw.scale) = (Some(*lo), Some(*hi), Some(*scale));
            }
            ParamKind::Integer { lo, hi, scale } => {
                raw.kind = "integer".into();
                (raw.lo, raw.hi, raw.scale) = (Some(*lo as f64), Some(*hi as f64), Some(*scale));
            }
            ParamKind::Boolean => raw.kind = "boolean".into(),
            ParamKind::Categorical { categories } => {
                raw.kind = "categorical".into();
                raw.categories = Some(categories.clone());
            }
        }
        raw
    }
}

impl Serialize for SearchSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawSpace { params: self.params.iter().map(RawParam::from).collect() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawSpace::deserialize(d)?;
        let params = raw
            .params
            .into_iter()
            .map(ParamSpec::try_from)
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        SearchSpace::new(params).map_err(serde::de::Error::custom)
    }
}
