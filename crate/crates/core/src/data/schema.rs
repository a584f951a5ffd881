use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::container::Container;
use crate::error::{Error, Result};

/// Metadata columns of a sample file. They are labels and bookkeeping and
/// never enter model input.
pub const METADATA_COLUMNS: [&str; 8] = [
    "time", "sample", "anomaly", "category", "setting", "active", "variant", "action",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Mechanical,
    Electrical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Target,
    Measurement,
    Estimation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalInfo {
    pub name: String,
    pub domain: Domain,
    pub kind: SignalKind,
    pub axis: Option<u8>,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Mechanical => "mechanical",
            Domain::Electrical => "electrical",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mechanical" => Ok(Domain::Mechanical),
            "electrical" => Ok(Domain::Electrical),
            _ => Err(Error::Data(format!("unknown signal domain '{s}'"))),
        }
    }
}

impl fmt::Display for SignalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalKind::Target => "target",
            SignalKind::Measurement => "measurement",
            SignalKind::Estimation => "estimation",
        })
    }
}

impl FromStr for SignalKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(SignalKind::Target),
            "measurement" => Ok(SignalKind::Measurement),
            "estimation" => Ok(SignalKind::Estimation),
            _ => Err(Error::Data(format!("unknown signal kind '{s}'"))),
        }
    }
}

/// Ordered list of machine-data signals.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalSchema {
    signals: Vec<SignalInfo>,
}

// per-axis signals in column order
const AXIS_SIGNALS: [(&str, Domain, SignalKind); 21] = {
    use Domain::*;
    use SignalKind::*;
    [
        ("target_position", Mechanical, Target),
        ("target_velocity", Mechanical, Target),
        ("target_acceleration", Mechanical, Target),
        ("target_torque", Mechanical, Target),
        ("computed_inertia", Mechanical, Estimation),
        ("computed_torque", Mechanical, Estimation),
        ("motor_position", Mechanical, Measurement),
        ("motor_velocity", Mechanical, Measurement),
        ("joint_position", Mechanical, Measurement),
        ("joint_velocity", Mechanical, Measurement),
        ("motor_torque", Mechanical, Estimation),
        ("torque_sensor_a", Mechanical, Measurement),
        ("torque_sensor_b", Mechanical, Measurement),
        ("motor_iq", Electrical, Estimation),
        ("motor_id", Electrical, Estimation),
        ("power_motor_el", Electrical, Estimation),
        ("power_motor_mech", Electrical, Estimation),
        ("power_load_mech", Electrical, Estimation),
        ("motor_voltage", Electrical, Measurement),
        ("supply_voltage", Electrical, Measurement),
        ("brake_voltage", Electrical, Measurement),
    ]
};

const ROBOT_SIGNALS: [&str; 4] = ["robot_voltage", "robot_current", "io_current", "system_current"];

impl SignalSchema {
    pub fn new(signals: Vec<SignalInfo>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &signals {
            if METADATA_COLUMNS.contains(&s.name.as_str()) {
                return Err(Error::Data(format!("signal name '{}' collides with a metadata column", s.name)));
            }
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Data(format!("duplicate signal '{}'", s.name)));
            }
        }
        Ok(SignalSchema { signals })
    }

    /// The 130 machine-data signals of the real robot recordings: 21 per
    /// axis for six axes plus four robot-level electrical signals.
    pub fn voraus() -> Self {
        let mut signals = Vec::with_capacity(130);
        for name in ROBOT_SIGNALS {
            signals.push(SignalInfo {
                name: name.to_string(),
                domain: Domain::Electrical,
                kind: SignalKind::Measurement,
                axis: None,
            });
        }
        for axis in 1..=6u8 {
            for (base, domain, kind) in AXIS_SIGNALS {
                signals.push(SignalInfo {
                    name: format!("{base}_{axis}"),
                    domain,
                    kind,
                    axis: Some(axis),
                });
            }
        }
        SignalSchema { signals }
    }

    /// Schema of the synthetic generator: alternating joint position and
    /// motor torque per axis, `n` signals in total.
    pub fn synthetic(n: usize) -> Self {
        let signals = (0..n)
            .map(|i| {
                let axis = (i / 2 + 1) as u8;
                if i % 2 == 0 {
                    SignalInfo {
                        name: format!("joint_position_{axis}"),
                        domain: Domain::Mechanical,
                        kind: SignalKind::Measurement,
                        axis: Some(axis),
                    }
                } else {
                    SignalInfo {
                        name: format!("motor_torque_{axis}"),
                        domain: Domain::Mechanical,
                        kind: SignalKind::Estimation,
                        axis: Some(axis),
                    }
                }
            })
            .collect();
        SignalSchema { signals }
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signals(&self) -> &[SignalInfo] {
        &self.signals
    }

    pub fn names(&self) -> Vec<&str> {
        self.signals.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.signals.iter().position(|s| s.name == name)
    }

    /// Column indices selected by `subset`, in schema order (name lists keep
    /// their own order).
    pub fn select(&self, subset: &SignalSubset) -> Result<Vec<usize>> {
        let pick = |f: &dyn Fn(&SignalInfo) -> bool| -> Vec<usize> {
            self.signals
                .iter()
                .enumerate()
                .filter(|(_, s)| f(s))
                .map(|(i, _)| i)
                .collect()
        };
        let idx = match subset {
            SignalSubset::All => (0..self.len()).collect(),
            SignalSubset::Mechanical => pick(&|s| s.domain == Domain::Mechanical),
            SignalSubset::Electrical => pick(&|s| s.domain == Domain::Electrical),
            SignalSubset::Measured => pick(&|s| s.kind == SignalKind::Measurement),
            SignalSubset::Computed => pick(&|s| s.kind != SignalKind::Measurement),
            SignalSubset::Names(names) => names
                .iter()
                .map(|n| {
                    self.index_of(n)
                        .ok_or_else(|| Error::Data(format!("unknown signal '{n}' in subset")))
                })
                .collect::<Result<_>>()?,
        };
        if idx.is_empty() {
            return Err(Error::Data(format!("signal subset '{subset}' selects no signals")));
        }
        Ok(idx)
    }

    /// `name,domain,kind,axis` with an empty axis for robot-level signals.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["name", "domain", "kind", "axis"])?;
        for s in &self.signals {
            let axis = s.axis.map(|a| a.to_string()).unwrap_or_default();
            w.write_record([s.name.as_str(), &s.domain.to_string(), &s.kind.to_string(), &axis])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path)?;
        let mut signals = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Data(format!("{}: expected 4 fields per row", path.display())));
            }
            let axis = match &rec[3] {
                "" => None,
                a => Some(
                    a.parse()
                        .map_err(|_| Error::Data(format!("{}: bad axis '{a}'", path.display())))?,
                ),
            };
            signals.push(SignalInfo {
                name: rec[0].to_string(),
                domain: rec[1].parse()?,
                kind: rec[2].parse()?,
                axis,
            });
        }
        Self::new(signals)
    }
}

impl SignalSchema {
    /// Stores the schema in a model container header as one
    /// `name:domain:kind:axis` token per signal.
    pub fn write_into(&self, c: &mut Container) {
        let tokens: Vec<String> = self
            .signals
            .iter()
            .map(|s| {
                let axis = s.axis.map(|a| a.to_string()).unwrap_or_default();
                format!("{}:{}:{}:{axis}", s.name, s.domain, s.kind)
            })
            .collect();
        c.set_list("schema.signals", &tokens);
    }

    pub fn read_from(c: &Container) -> Result<Self> {
        let tokens: Vec<String> = c.parse_list("schema.signals")?;
        let signals = tokens
            .iter()
            .map(|t| {
                let parts: Vec<&str> = t.split(':').collect();
                let [name, domain, kind, axis] = parts[..] else {
                    return Err(Error::Format(format!("bad schema entry '{t}'")));
                };
                Ok(SignalInfo {
                    name: name.to_string(),
                    domain: domain.parse()?,
                    kind: kind.parse()?,
                    axis: match axis {
                        "" => None,
                        a => Some(a.parse().map_err(|_| Error::Format(format!("bad axis in '{t}'")))?),
                    },
                })
            })
            .collect::<Result<_>>()?;
        Self::new(signals)
    }
}

/// Signal selection; the groups follow the schema's domain/kind labels and
/// "computed" joins targets with estimations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum SignalSubset {
    #[default]
    All,
    Mechanical,
    Electrical,
    Measured,
    Computed,
    Names(Vec<String>),
}

impl fmt::Display for SignalSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalSubset::All => f.write_str("all"),
            SignalSubset::Mechanical => f.write_str("mechanical"),
            SignalSubset::Electrical => f.write_str("electrical"),
            SignalSubset::Measured => f.write_str("measured"),
            SignalSubset::Computed => f.write_str("computed"),
            SignalSubset::Names(n) => write!(f, "names:{}", n.join("+")),
        }
    }
}

impl FromStr for SignalSubset {
    type Err = Error;

    /// Accepts a group name or `names:a+b+c`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => SignalSubset::All,
            "mechanical" => SignalSubset::Mechanical,
            "electrical" => SignalSubset::Electrical,
            "measured" => SignalSubset::Measured,
            "computed" => SignalSubset::Computed,
            _ => match s.strip_prefix("names:") {
                Some(rest) if !rest.is_empty() => {
                    SignalSubset::Names(rest.split('+').map(str::to_string).collect())
                }
                _ => return Err(Error::InvalidArgument(format!("unknown signal subset '{s}'"))),
            },
        })
    }
}
