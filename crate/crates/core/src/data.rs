//! Observed trial rows and the `id,z,s_time,s_event,t_time,t_event` CSV schema.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One subject's observed semi-competing risks outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: u64,
    /// Treatment arm, 0 or 1.
    pub z: u8,
    /// Time of S, or the death/censoring time when S was not observed.
    pub s_time: f64,
    #[serde(with = "indicator")]
    pub s_event: bool,
    pub t_time: f64,
    #[serde(with = "indicator")]
    pub t_event: bool,
}

mod indicator {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "event indicator must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// The four observable outcome patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObservedCase {
    /// Neither S nor T observed.
    Censored,
    /// Death without prior S.
    DirectDeath,
    /// S observed, then censored alive.
    IllnessCensored,
    /// S observed, then death.
    IllnessDeath,
}

impl SubjectRecord {
    /// Gap time of the 1→2 transition (equal to the 1→3 time when S is absent).
    pub fn t12(&self) -> f64 {
        self.s_time
    }

    pub fn t13(&self) -> f64 {
        self.s_time
    }

    /// Gap time spent in state S, defined only when S was observed.
    pub fn t23(&self) -> Option<f64> {
        self.s_event.then(|| self.t_time - self.s_time)
    }

    pub fn case(&self) -> ObservedCase {
        match (self.s_event, self.t_event) {
            (false, false) => ObservedCase::Censored,
            (false, true) => ObservedCase::DirectDeath,
            (true, false) => ObservedCase::IllnessCensored,
            (true, true) => ObservedCase::IllnessDeath,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::data(format!("subject {}: {msg}", self.id)));
        if self.z > 1 {
            return bad(format!("arm must be 0 or 1, got {}", self.z));
        }
        for (name, v) in [("s_time", self.s_time), ("t_time", self.t_time)] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be a finite non-negative time, got {v}"));
            }
        }
        if self.s_event {
            if self.s_time > self.t_time {
                return bad(format!(
                    "s_time {} exceeds t_time {} although S was observed",
                    self.s_time, self.t_time
                ));
            }
        } else if self.s_time != self.t_time {
            return bad(format!(
                "s_time {} must equal t_time {} when S was not observed",
                self.s_time, self.t_time
            ));
        }
        Ok(())
    }
}

/// A validated set of subject records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub records: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(records: Vec<SubjectRecord>) -> Result<Self> {
        for r in &records {
            r.validate()?;
        }
        let mut ids: Vec<u64> = records.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::data("subject ids must be unique"));
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of arm `z`, in file order.
    pub fn arm(&self, z: u8) -> Vec<SubjectRecord> {
        self.records.iter().filter(|r| r.z == z).copied().collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        for needed in ["id", "z", "s_time", "s_event", "t_time", "t_event"] {
            if !headers.iter().any(|h| h == needed) {
                return Err(Error::data(format!("missing column `{needed}`")));
            }
        }
        let mut records = Vec::new();
        for (line, row) in rdr.deserialize::<SubjectRecord>().enumerate() {
            let row = row.map_err(|e| Error::data(format!("row {}: {e}", line + 2)))?;
            records.push(row);
        }
        Self::new(records)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for r in &self.records {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::read_csv(std::io::BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Counts of subjects making each observed transition, per arm:
    /// `[z][0]` 1→2, `[z][1]` 1→3, `[z][2]` 2→3.
    pub fn transition_counts(&self) -> [[usize; 3]; 2] {
        let mut counts = [[0usize; 3]; 2];
        for r in &self.records {
            let c = &mut counts[r.z as usize];
            match r.case() {
                ObservedCase::DirectDeath => c[1] += 1,
                ObservedCase::IllnessCensored => c[0] += 1,
                ObservedCase::IllnessDeath => {
                    c[0] += 1;
                    c[2] += 1;
                }
                ObservedCase::Censored => {}
            }
        }
        counts
    }
}
