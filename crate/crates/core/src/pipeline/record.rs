use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{read_text, write_text, PipelineError};
use crate::digest::sha256_hex;

pub const RUN_RECORD: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunVerdict {
    Pass,
    Violated,
    Error,
}

impl RunVerdict {
    /// 0 = all pass, 1 = violations found, 2 = pipeline error.
    pub fn exit_code(self) -> i32 {
        match self {
            RunVerdict::Pass => 0,
            RunVerdict::Violated => 1,
            RunVerdict::Error => 2,
        }
    }
}

/// A file written to the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub name: String,
    pub sha256: String,
}

/// A file read from outside the run directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRef {
    pub path: PathBuf,
    pub sha256: String,
    /// Copy kept in the run directory.
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub millis: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub workflow: String,
    pub started_at: String,
    pub inputs: Vec<InputRef>,
    pub stages: Vec<StageRecord>,
    pub artifacts: BTreeMap<String, String>,
    pub verdict: RunVerdict,
    pub iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        serde_json::from_str(&read_text(&dir.join(RUN_RECORD))?).map_err(|e| PipelineError::Config(format!("run record: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run record serializes")
    }

    /// Recomputes every artifact digest in `dir` and checks that each stage
    /// only consumes artifacts produced before it.
    pub fn verify(&self, dir: &Path) -> Result<(), Vec<String>> {
        let mut problems = Vec::new();
        for (name, digest) in &self.artifacts {
            match std::fs::read(dir.join(name)) {
                Ok(bytes) if sha256_hex(&bytes) == *digest => {}
                Ok(_) => problems.push(format!("{name}: digest mismatch")),
                Err(e) => problems.push(format!("{name}: {e}")),
            }
        }
        let mut available: Vec<&str> = self.inputs.iter().map(|i| i.artifact.as_str()).collect();
        for stage in &self.stages {
            for input in &stage.inputs {
                if !available.contains(&input.as_str()) {
                    problems.push(format!("stage {} reads {input} before it is produced", stage.name));
                }
            }
            for output in &stage.outputs {
                if !self.artifacts.contains_key(output) {
                    problems.push(format!("stage {} output {output} is not recorded", stage.name));
                }
                available.push(output);
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

/// Writes artifacts and stage entries for one run.
pub(crate) struct Recorder {
    pub dir: PathBuf,
    pub record: RunRecord,
    persist: bool,
}

impl Recorder {
    pub fn new(dir: &Path, workflow: &str) -> Self {
        Recorder {
            dir: dir.to_owned(),
            record: RunRecord {
                run_id: uuid::Uuid::new_v4().to_string(),
                workflow: workflow.to_owned(),
                started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                inputs: Vec::new(),
                stages: Vec::new(),
                artifacts: BTreeMap::new(),
                verdict: RunVerdict::Error,
                iterations: 0,
                failed_stage: None,
                error: None,
            },
            persist: true,
        }
    }

    /// A recorder that keeps digests but writes nothing.
    pub fn in_memory(workflow: &str) -> Self {
        let mut r = Recorder::new(Path::new(""), workflow);
        r.persist = false;
        r
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<String, PipelineError> {
        if self.persist {
            write_text(&self.dir.join(name), text)?;
        }
        self.record.artifacts.insert(name.to_owned(), sha256_hex(text));
        Ok(name.to_owned())
    }

    /// Copies an external input into the run directory.
    pub fn input(&mut self, path: &Path, name: &str, text: &str) -> Result<String, PipelineError> {
        self.write(name, text)?;
        self.record.inputs.push(InputRef { path: path.to_owned(), sha256: sha256_hex(text), artifact: name.to_owned() });
        Ok(name.to_owned())
    }

    pub fn stage(&mut self, name: impl Into<String>, started: Instant, inputs: &[&str], outputs: &[&str]) {
        self.record.stages.push(StageRecord {
            name: name.into(),
            millis: started.elapsed().as_millis() as u64,
            inputs: inputs.iter().map(|s| (*s).to_owned()).collect(),
            outputs: outputs.iter().map(|s| (*s).to_owned()).collect(),
        });
    }

    pub fn save(&self) -> Result<(), PipelineError> {
        if self.persist {
            write_text(&self.dir.join(RUN_RECORD), &self.record.to_json())?;
        }
        Ok(())
    }

    /// Records a failed stage, saves the record and wraps the error.
    pub fn fail(&mut self, stage: &str, error: PipelineError) -> PipelineError {
        self.record.verdict = RunVerdict::Error;
        self.record.failed_stage = Some(stage.to_owned());
        self.record.error = Some(error.to_string());
        let _ = self.save();
        PipelineError::Stage { stage: stage.to_owned(), source: Box::new(error) }
    }

    pub fn finish(&mut self, verdict: RunVerdict, iterations: usize) -> Result<(), PipelineError> {
        self.record.verdict = verdict;
        self.record.iterations = iterations;
        self.save()
    }
}

/// Records a failed `result` as stage `stage` before it propagates.
pub(crate) fn attempt<T, E: Into<PipelineError>>(
    rec: &mut Recorder,
    stage: &str,
    result: Result<T, E>,
) -> Result<T, PipelineError> {
    result.map_err(|e| rec.fail(stage, e.into()))
}
