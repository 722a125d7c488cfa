use std::fmt;

use serde::{Deserialize, Serialize};

/// A parameter value as it appears in plans, configs and plan files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Scalar {
    /// Type tag used in plan files.
    pub fn type_name(&self) -> &'static str {
        match self {
            Scalar::Int(_) => "INT",
            Scalar::Float(_) => "FLOAT",
            Scalar::Str(_) => "STRING",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Scalar::Int(v) => Some(v as f64),
            Scalar::Float(v) => Some(v),
            Scalar::Str(_) => None,
        }
    }

    /// Integer view; floats qualify only when they are integral.
    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Scalar::Int(v) => Some(v),
            Scalar::Float(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => Some(v as i64),
            _ => None,
        }
    }

    /// Parses `text` according to a plan-file type tag.
    pub fn parse_typed(type_name: &str, text: &str) -> Result<Scalar, String> {
        match type_name {
            "INT" => text
                .parse::<i64>()
                .map(Scalar::Int)
                .map_err(|e| format!("invalid INT `{text}`: {e}")),
            "FLOAT" => match text.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Scalar::Float(v)),
                Ok(_) => Err(format!("non-finite FLOAT `{text}`")),
                Err(e) => Err(format!("invalid FLOAT `{text}`: {e}")),
            },
            "STRING" => Ok(Scalar::Str(text.to_string())),
            other => Err(format!("unknown parameter type `{other}`")),
        }
    }

    /// Untyped parse used for CSV axes: integers, then floats, then strings.
    pub fn parse_untyped(text: &str) -> Scalar {
        if let Ok(v) = text.parse::<i64>() {
            return Scalar::Int(v);
        }
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Scalar::Float(v),
            _ => Scalar::Str(text.to_string()),
        }
    }
}

/// Shortest round-trip form; floats always carry a `.` or an exponent.
impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Float(v) => write!(f, "{v:?}"),
            Scalar::Str(s) => f.write_str(s),
        }
    }
}

/// Ordered parameter-name → value map for one point of the experiment space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment(pub Vec<(String, Scalar)>);

impl Assignment {
    pub fn get(&self, name: &str) -> Option<&Scalar> {
        self.0.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Scalar)> {
        self.0.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (name, value)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}={value}")?;
        }
        f.write_str("}")
    }
}
