use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::feature::FeatureTerm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s.trim().to_ascii_uppercase().as_str() {
            "X" => Some(Axis::X),
            "Y" => Some(Axis::Y),
            "Z" => Some(Axis::Z),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn parse(s: &str) -> Option<Sign> {
        match s.trim() {
            "+" | "positive" => Some(Sign::Plus),
            "-" | "\u{2212}" | "negative" => Some(Sign::Minus),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "parameters", rename_all = "lowercase")]
pub enum Operation {
    Move { axis: Axis, sign: Sign, distance_mm: f64 },
    Rotate { axis: Axis, angle_deg: f64 },
    Delete {},
    Resize { factor: f64 },
}

impl Operation {
    pub const SUPPORTED: [&'static str; 4] = ["move", "rotate", "delete", "resize"];

    pub fn name(&self) -> &'static str {
        match self {
            Operation::Move { .. } => "move",
            Operation::Rotate { .. } => "rotate",
            Operation::Delete {} => "delete",
            Operation::Resize { .. } => "resize",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureRef {
    /// Canonical vocabulary name.
    #[serde(rename = "type")]
    pub feature_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandEntry {
    pub feature: FeatureRef,
    pub operation: Operation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredCommand {
    pub commands: Vec<CommandEntry>,
    pub verified: bool,
}

impl StructuredCommand {
    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("plain data serializes")
    }
}

fn num(params: &Map<String, Value>, key: &str) -> Option<f64> {
    params.get(key).and_then(Value::as_f64)
}

/// Checks every schema rule and returns either the typed command (feature
/// names canonicalized) or the full list of violations.
pub fn validate_schema(candidate: &Value) -> Result<StructuredCommand, Vec<String>> {
    let mut v = Vec::new();
    let Some(obj) = candidate.as_object() else {
        return Err(vec!["top level must be a JSON object".into()]);
    };
    let verified = match obj.get("verified") {
        None => true,
        Some(Value::Bool(b)) => *b,
        Some(_) => {
            v.push("verified must be a boolean".into());
            false
        }
    };
    let list = match obj.get("commands") {
        Some(Value::Array(a)) if !a.is_empty() => a.as_slice(),
        Some(Value::Array(_)) => {
            v.push("commands must contain at least one entry".into());
            &[]
        }
        _ => {
            v.push("commands must be an array".into());
            &[]
        }
    };
    let mut out = Vec::new();
    for (i, entry) in list.iter().enumerate() {
        let at = |m: &str| format!("commands[{i}]: {m}");
        let feature = match entry.get("feature").and_then(|f| f.get("type")).and_then(Value::as_str) {
            None => {
                v.push(at("feature.type must be a string"));
                None
            }
            Some(t) => match FeatureTerm::parse(t) {
                Ok(term) => Some(term.name().to_string()),
                Err(_) => {
                    v.push(at(&format!("unknown feature type '{t}'")));
                    None
                }
            },
        };
        let hint = match entry.get("feature").and_then(|f| f.get("hint")) {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(_) => {
                v.push(at("feature.hint must be a string"));
                None
            }
        };
        let op = entry.get("operation");
        let op_type = op.and_then(|o| o.get("type")).and_then(Value::as_str);
        let empty = Map::new();
        let params = match op.and_then(|o| o.get("parameters")) {
            None | Some(Value::Null) => &empty,
            Some(Value::Object(p)) => p,
            Some(_) => {
                v.push(at("operation.parameters must be an object"));
                &empty
            }
        };
        let before = v.len();
        let axis = |v: &mut Vec<String>, op: &str| match params.get("axis").and_then(Value::as_str) {
            None => {
                v.push(at(&format!("{op} requires axis")));
                None
            }
            Some(a) => Axis::parse(a).or_else(|| {
                v.push(at(&format!("axis must be X, Y or Z, got '{a}'")));
                None
            }),
        };
        let operation = match op_type.map(str::to_ascii_lowercase).as_deref() {
            None => {
                v.push(at("operation.type must be a string"));
                None
            }
            Some("move") => {
                let axis = axis(&mut v, "move");
                let sign = match params.get("sign").and_then(Value::as_str) {
                    None => {
                        v.push(at("move requires sign"));
                        None
                    }
                    Some(s) => Sign::parse(s).or_else(|| {
                        v.push(at(&format!("sign must be '+' or '-', got '{s}'")));
                        None
                    }),
                };
                let distance = match num(params, "distance_mm") {
                    None => {
                        v.push(at("move requires distance_mm"));
                        None
                    }
                    Some(d) if !(d > 0.0) || !d.is_finite() => {
                        v.push(at(&format!("distance_mm must be positive, got {d}")));
                        None
                    }
                    Some(d) => Some(d),
                };
                match (axis, sign, distance) {
                    (Some(axis), Some(sign), Some(distance_mm)) => Some(Operation::Move {
                        axis,
                        sign,
                        distance_mm,
                    }),
                    _ => None,
                }
            }
            Some("rotate") => {
                let axis = axis(&mut v, "rotate");
                let angle = match num(params, "angle_deg") {
                    None => {
                        v.push(at("rotate requires angle_deg"));
                        None
                    }
                    Some(a) if a == 0.0 || a.abs() >= 360.0 || !a.is_finite() => {
                        v.push(at(&format!(
                            "angle_deg must be non-zero and inside (-360, 360), got {a}"
                        )));
                        None
                    }
                    Some(a) => Some(a),
                };
                match (axis, angle) {
                    (Some(axis), Some(angle_deg)) => Some(Operation::Rotate { axis, angle_deg }),
                    _ => None,
                }
            }
            Some("delete") => {
                if !params.is_empty() {
                    v.push(at("delete takes no parameters"));
                }
                Some(Operation::Delete {})
            }
            Some("resize") => match num(params, "factor") {
                None => {
                    v.push(at("resize requires factor"));
                    None
                }
                Some(f) if !(f > 0.0) || !f.is_finite() => {
                    v.push(at(&format!("factor must be positive, got {f}")));
                    None
                }
                Some(factor) => Some(Operation::Resize { factor }),
            },
            Some(other) => {
                v.push(at(&format!(
                    "unsupported operation '{other}' (supported: {})",
                    Operation::SUPPORTED.join(", ")
                )));
                None
            }
        };
        if let (Some(feature_type), Some(operation)) = (feature, operation) {
            if v.len() == before {
                out.push(CommandEntry {
                    feature: FeatureRef { feature_type, hint },
                    operation,
                });
            }
        }
    }
    if v.is_empty() {
        Ok(StructuredCommand {
            commands: out,
            verified,
        })
    } else {
        Err(v)
    }
}
