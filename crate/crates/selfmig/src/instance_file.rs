//! The instance JSON document.
//!
//! Real numbers are written as decimal strings holding the shortest
//! representation that parses back to the same `f64`; readers also accept
//! plain JSON numbers.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use selfmig_core::{Instance, Job, Mode, PowerFunction};

use crate::FormatError;

pub const INSTANCE_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct NumVisitor;

        impl Visitor<'_> for NumVisitor {
            type Value = Num;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a finite number or a decimal string")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Num, E> {
                match v.trim().parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(Num(x)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Num, E> {
                Ok(Num(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Num, E> {
                Ok(Num(v as f64))
            }
        }

        d.deserialize_any(NumVisitor)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub(crate) enum PowerDoc {
    Polynomial { gamma: Num },
    Table { points: Vec<[Num; 2]> },
}

impl PowerDoc {
    fn from_power(pf: &PowerFunction) -> Self {
        match pf {
            PowerFunction::Polynomial { gamma } => PowerDoc::Polynomial { gamma: Num(*gamma) },
            PowerFunction::Table(t) => {
                PowerDoc::Table { points: t.points().iter().map(|p| [Num(p[0]), Num(p[1])]).collect() }
            }
        }
    }

    fn to_power(&self) -> selfmig_core::Result<PowerFunction> {
        match self {
            PowerDoc::Polynomial { gamma } => PowerFunction::polynomial(gamma.0),
            PowerDoc::Table { points } => {
                let pts: Vec<[f64; 2]> = points.iter().map(|p| [p[0].0, p[1].0]).collect();
                PowerFunction::table(&pts)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobDoc {
    id: String,
    release: Num,
    size: Num,
    weight: u64,
    rates: Vec<Num>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct InstanceDoc {
    version: u64,
    machines: usize,
    mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    power_functions: Option<Vec<PowerDoc>>,
    jobs: Vec<Value>,
}

impl InstanceDoc {
    pub(crate) fn from_instance(instance: &Instance) -> Self {
        let jobs = instance
            .jobs
            .iter()
            .map(|j| {
                let doc = JobDoc {
                    id: j.id.clone(),
                    release: Num(j.release),
                    size: Num(j.size),
                    weight: j.weight,
                    rates: j.rates.iter().copied().map(Num).collect(),
                };
                serde_json::to_value(doc).expect("job documents always serialize")
            })
            .collect();
        InstanceDoc {
            version: INSTANCE_VERSION,
            machines: instance.machine_count,
            mode: instance.mode,
            power_functions: instance.power_functions.as_ref().map(|p| p.iter().map(PowerDoc::from_power).collect()),
            jobs,
        }
    }

    pub(crate) fn into_instance(self) -> Result<Instance, FormatError> {
        if self.version != INSTANCE_VERSION {
            return Err(FormatError::Version { what: "instance", found: self.version, expected: INSTANCE_VERSION });
        }
        let power_functions = match self.power_functions {
            None => None,
            Some(docs) => Some(
                docs.iter()
                    .enumerate()
                    .map(|(i, d)| {
                        d.to_power().map_err(|e| FormatError::Field {
                            field: format!("power_functions[{i}]"),
                            msg: e.to_string(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            ),
        };
        let mut jobs = Vec::with_capacity(self.jobs.len());
        for (index, value) in self.jobs.into_iter().enumerate() {
            let id = match value.get("id") {
                Some(Value::String(s)) => s.clone(),
                _ => format!("<index {index}>"),
            };
            let doc: JobDoc =
                serde_json::from_value(value).map_err(|e| FormatError::Job { id, index, msg: e.to_string() })?;
            jobs.push(Job {
                id: doc.id,
                release: doc.release.0,
                size: doc.size.0,
                weight: doc.weight,
                rates: doc.rates.into_iter().map(|r| r.0).collect(),
            });
        }
        Ok(Instance { machine_count: self.machines, mode: self.mode, jobs, power_functions })
    }
}

/// Pretty-printed instance document with a trailing newline.
pub fn instance_to_string(instance: &Instance) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceDoc::from_instance(instance)).expect("instance serializes");
    s.push('\n');
    s
}

/// Parses an instance document. The result is not validated.
pub fn instance_from_str(text: &str) -> Result<Instance, FormatError> {
    let value: Value = serde_json::from_str(text).map_err(FormatError::json)?;
    instance_from_value(value)
}

pub(crate) fn instance_from_value(value: Value) -> Result<Instance, FormatError> {
    match value.get("version") {
        Some(v) => match v.as_u64() {
            Some(found) if found != INSTANCE_VERSION => {
                return Err(FormatError::Version { what: "instance", found, expected: INSTANCE_VERSION })
            }
            Some(_) => {}
            None => {
                return Err(FormatError::Field {
                    field: "version".into(),
                    msg: format!("expected an integer, found {v}"),
                })
            }
        },
        None => return Err(FormatError::Field { field: "version".into(), msg: "missing".into() }),
    }
    let doc: InstanceDoc = serde_json::from_value(value)
        .map_err(|e| FormatError::Field { field: "instance".into(), msg: e.to_string() })?;
    doc.into_instance()
}

pub fn save_instance(instance: &Instance, path: &Path) -> Result<(), FormatError> {
    crate::write_file(path, instance_to_string(instance).as_bytes())
}

pub fn load_instance(path: &Path) -> Result<Instance, FormatError> {
    instance_from_str(&crate::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use selfmig_core::generate::{generate, GeneratorConfig};

    #[test]
    fn generated_instances_round_trip() {
        for seed in 0..10 {
            let inst = generate(&GeneratorConfig::flow(3, 12, seed)).unwrap();
            let text = instance_to_string(&inst);
            let back = instance_from_str(&text).unwrap();
            assert_eq!(back, inst);
            for (a, b) in back.jobs.iter().zip(&inst.jobs) {
                assert_eq!(a.release.to_bits(), b.release.to_bits());
                assert_eq!(a.size.to_bits(), b.size.to_bits());
            }
            assert_eq!(instance_to_string(&back), text);
        }
    }

    #[test]
    fn missing_rates_names_the_job() {
        let text = r#"{"version":1,"machines":1,"mode":"flow","jobs":[
            {"id":"a","release":"0","size":"1","weight":1,"rates":["1"]},
            {"id":"late-job","release":"0","size":"1","weight":1}]}"#;
        let err = instance_from_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("late-job"), "{msg}");
        assert!(msg.contains("rates"), "{msg}");
    }

    #[test]
    fn version_mismatch_is_reported() {
        let text = r#"{"version":2,"machines":1,"mode":"flow","jobs":[]}"#;
        assert!(matches!(instance_from_str(text), Err(FormatError::Version { found: 2, .. })));
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = instance_from_str("{\n  \"version\": 1,\n  oops\n}").unwrap_err();
        assert!(matches!(err, FormatError::Json { line: 3, .. }), "{err}");
    }

    #[test]
    fn polynomial_energy_fixture_loads() {
        let text = r#"{"version":1,"machines":1,"mode":"energy",
            "power_functions":[{"kind":"polynomial","gamma":2}],
            "jobs":[{"id":"j","release":0,"size":2,"weight":4,"rates":[1]}]}"#;
        let inst = instance_from_str(text).unwrap();
        assert!(inst.validate().is_empty());
        let pf = inst.power(0).unwrap();
        assert_eq!(pf.eval_g(4.0).unwrap(), 2.0);
        assert!((pf.eval_conjugate(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn numbers_are_written_as_strings() {
        let inst = generate(&GeneratorConfig::flow(1, 1, 3)).unwrap();
        let v: Value = serde_json::from_str(&instance_to_string(&inst)).unwrap();
        assert!(v["jobs"][0]["size"].is_string());
        assert!(v["jobs"][0]["weight"].is_u64());
    }
}
