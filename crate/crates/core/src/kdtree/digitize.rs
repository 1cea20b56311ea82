//! Mapping file attributes to normalized points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttrKind {
    Numeric { min: f64, max: f64 },
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttrKind,
}

/// Ordered attribute list; its length is the index dimension `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Num(f64),
    Cat(String),
}

impl std::fmt::Display for AttrValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AttrValue::Num(x) => write!(f, "{x}"),
            AttrValue::Cat(s) => f.write_str(s),
        }
    }
}

fn min_max(x: f64, min: f64, max: f64) -> f64 {
    if min == max {
        0.5
    } else {
        (x - min) / (max - min)
    }
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let s = Self { attributes };
        s.validate()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.attributes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Config("schema has no attributes".into()));
        }
        for a in &self.attributes {
            match &a.kind {
                AttrKind::Numeric { min, max } if !(min.is_finite() && max.is_finite() && min <= max) => {
                    return Err(Error::Config(format!("attribute {:?}: bad range", a.name)));
                }
                AttrKind::Categorical { values } if values.is_empty() => {
                    return Err(Error::Config(format!("attribute {:?}: no categories", a.name)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Linear map of a raw bound onto the normalized axis `j`, without range
    /// checks (query bounds may lie outside the data range). Categorical axes
    /// take the category index as the raw value.
    pub fn normalize_bound(&self, j: usize, raw: f64) -> f64 {
        match &self.attributes[j].kind {
            AttrKind::Numeric { min, max } => min_max(raw, *min, *max),
            AttrKind::Categorical { values } => min_max(raw, 0.0, (values.len() - 1) as f64),
        }
    }

    /// Inverse of [`Schema::normalize_bound`].
    pub fn denormalize(&self, j: usize, x: f64) -> f64 {
        let (min, max) = match &self.attributes[j].kind {
            AttrKind::Numeric { min, max } => (*min, *max),
            AttrKind::Categorical { values } => (0.0, (values.len() - 1) as f64),
        };
        if min == max {
            min
        } else {
            min + x * (max - min)
        }
    }
}

/// Min-max normalize each attribute to `[0, 1]`. Categories map to their index
/// in the schema enumeration before normalizing; a constant attribute maps
/// to 0.5.
pub fn digitize(values: &[AttrValue], schema: &Schema) -> Result<Point> {
    if values.len() != schema.dim() {
        return Err(Error::DimensionMismatch { expected: schema.dim(), found: values.len() });
    }
    let coords = values
        .iter()
        .zip(&schema.attributes)
        .map(|(v, a)| match (&a.kind, v) {
            (AttrKind::Numeric { min, max }, AttrValue::Num(x)) => {
                if !(x.is_finite() && min <= x && x <= max) {
                    return Err(Error::InvalidArgument(format!(
                        "{}={x} outside [{min}, {max}]",
                        a.name
                    )));
                }
                Ok(min_max(*x, *min, *max))
            }
            (AttrKind::Categorical { values }, AttrValue::Cat(s)) => {
                let idx = values.iter().position(|c| c == s).ok_or_else(|| {
                    Error::UnknownCategory { attribute: a.name.clone(), value: s.clone() }
                })?;
                Ok(min_max(idx as f64, 0.0, (values.len() - 1) as f64))
            }
            (_, v) => Err(Error::InvalidArgument(format!(
                "value {v} has the wrong kind for attribute {}",
                a.name
            ))),
        })
        .collect::<Result<Vec<_>>>()?;
    Point::new(coords)
}
