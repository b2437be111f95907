//! Staged, resumable pipeline runs.
//!
//! Each stage reads its predecessors' files from the output directory and
//! writes its own. A stage's input checksum covers the relevant config
//! keys, the output checksums of the stages it reads and the hashes of any
//! external input files; a stage whose input checksum and on-disk outputs
//! match the previous manifest is reused instead of recomputed.

mod config;
pub mod io;
mod stages;

pub use config::PipelineConfig;
pub use stages::{load_verdicts, EvaluationSummary};

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageName {
    Mine,
    Link,
    Szz,
    Metrics,
    Filter,
    Stratify,
    Fit,
    Evaluate,
    Importance,
    Stability,
    Stats,
}

impl StageName {
    pub const ALL: [StageName; 11] = [
        StageName::Mine,
        StageName::Link,
        StageName::Szz,
        StageName::Metrics,
        StageName::Filter,
        StageName::Stratify,
        StageName::Fit,
        StageName::Evaluate,
        StageName::Importance,
        StageName::Stability,
        StageName::Stats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageName::Mine => "mine",
            StageName::Link => "link",
            StageName::Szz => "szz",
            StageName::Metrics => "metrics",
            StageName::Filter => "filter",
            StageName::Stratify => "stratify",
            StageName::Fit => "fit",
            StageName::Evaluate => "evaluate",
            StageName::Importance => "importance",
            StageName::Stability => "stability",
            StageName::Stats => "stats",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn dependencies(self) -> &'static [StageName] {
        use StageName::*;
        match self {
            Mine => &[],
            Link => &[Mine],
            Szz => &[Mine, Link],
            Metrics => &[Mine, Szz],
            Filter => &[Metrics, Szz],
            Stratify => &[Filter],
            Fit => &[Stratify],
            Evaluate => &[Stratify, Fit],
            Importance => &[Fit],
            Stability => &[Importance],
            Stats => &[Metrics, Szz],
        }
    }

    /// This stage plus everything it transitively depends on.
    pub fn closure(self) -> Vec<StageName> {
        let mut out = vec![self];
        let mut i = 0;
        while i < out.len() {
            for &d in out[i].dependencies() {
                if !out.contains(&d) {
                    out.push(d);
                }
            }
            i += 1;
        }
        out.sort();
        out
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for StageName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StageName::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: StageName,
    pub input_checksum: String,
    /// Hash over the stage's output files.
    pub output_checksum: String,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub started: String,
    pub finished: String,
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Derived from the config and the mined history, so identical inputs
    /// give the same id.
    pub run_id: String,
    pub tool_version: String,
    pub config: PipelineConfig,
    pub stages: Vec<StageRecord>,
    pub started: String,
    pub finished: Option<String>,
}

impl RunManifest {
    pub fn stage(&self, stage: StageName) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    pub fn load(output_dir: &Path) -> Result<Option<RunManifest>> {
        let path = output_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        io::read_json(&path).map(Some)
    }

    fn upsert(&mut self, record: StageRecord) {
        match self.stages.iter_mut().find(|r| r.stage == record.stage) {
            Some(slot) => *slot = record,
            None => {
                self.stages.push(record);
                self.stages.sort_by_key(|r| r.stage);
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after this stage (running only what it needs).
    pub until: Option<StageName>,
    /// Recompute this stage and everything downstream even if cached.
    pub force_from: Option<StageName>,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub executed: Vec<StageName>,
    pub reused: Vec<StageName>,
}

pub struct Pipeline {
    config: PipelineConfig,
    previous: Option<RunManifest>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let previous = match RunManifest::load(&config.output) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("ignoring unreadable manifest: {e}");
                None
            }
        };
        Ok(Self { config, previous })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn output_dir(&self) -> &Path {
        &self.config.output
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.config.output.join(relative)
    }

    /// Runs the requested stages, reusing cached ones whose inputs are
    /// unchanged, and writes the manifest after every stage.
    pub fn run(&mut self, options: &RunOptions) -> Result<RunSummary> {
        let wanted: Vec<StageName> = match options.until {
            Some(s) => s.closure(),
            None => StageName::ALL.to_vec(),
        };
        let mut manifest = RunManifest {
            run_id: String::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            stages: self.previous.as_ref().map(|m| m.stages.clone()).unwrap_or_default(),
            started: now(),
            finished: None,
        };
        let ctx = stages::Context::new(&self.config);
        let mut executed = Vec::new();
        let mut reused = Vec::new();
        let mut forced: Vec<StageName> = Vec::new();
        for stage in wanted {
            let deps: BTreeMap<StageName, String> = stage
                .dependencies()
                .iter()
                .map(|&d| {
                    manifest
                        .stage(d)
                        .map(|r| (d, r.output_checksum.clone()))
                        .ok_or_else(|| Error::invalid(format!("stage {d} has not run")))
                })
                .collect::<Result<_>>()?;
            let input_checksum = ctx.input_checksum(stage, &deps).map_err(|e| Error::Stage {
                stage: stage.name().into(),
                checksum: "unavailable".into(),
                source: Box::new(e),
            })?;
            if stage == StageName::Mine {
                manifest.run_id = input_checksum[..16].to_string();
            }
            let force = options.force_from == Some(stage)
                || stage.dependencies().iter().any(|d| forced.contains(d));
            if !force {
                if let Some(prev) = manifest.stage(stage).filter(|r| r.input_checksum == input_checksum) {
                    if self.outputs_checksum(&prev.outputs).ok().as_deref() == Some(prev.output_checksum.as_str()) {
                        let mut rec = prev.clone();
                        rec.reused = true;
                        manifest.upsert(rec);
                        reused.push(stage);
                        log::info!("stage {stage}: reused");
                        continue;
                    }
                }
            } else {
                forced.push(stage);
            }
            let started = now();
            log::info!("stage {stage}: running");
            let wrap = |e: Error| Error::Stage {
                stage: stage.name().into(),
                checksum: input_checksum.clone(),
                source: Box::new(e),
            };
            let outputs = stages::run(stage, &ctx).map_err(wrap)?;
            let mut names = Vec::new();
            for (name, bytes) in &outputs {
                io::write_atomic(&self.path(name), bytes).map_err(wrap)?;
                names.push(name.clone());
            }
            names.sort();
            let output_checksum = self.outputs_checksum(&names).map_err(wrap)?;
            manifest.upsert(StageRecord {
                stage,
                input_checksum,
                output_checksum,
                outputs: names,
                started,
                finished: now(),
                reused: false,
            });
            executed.push(stage);
            self.write_manifest(&manifest)?;
        }
        manifest.finished = Some(now());
        self.write_manifest(&manifest)?;
        self.previous = Some(manifest.clone());
        Ok(RunSummary {
            manifest,
            executed,
            reused,
        })
    }

    fn write_manifest(&self, manifest: &RunManifest) -> Result<()> {
        io::write_atomic(&self.path(MANIFEST_FILE), &io::json_bytes(manifest)?)
    }

    fn outputs_checksum(&self, names: &[String]) -> Result<String> {
        let mut hasher_input = Vec::new();
        for name in names {
            let path = self.path(name);
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            hasher_input.extend_from_slice(name.as_bytes());
            hasher_input.push(0);
            hasher_input.extend_from_slice(io::sha256_hex(&bytes).as_bytes());
            hasher_input.push(b'\n');
        }
        Ok(io::sha256_hex(&hasher_input))
    }
}

/// Runs every stage, reusing cached results where inputs are unchanged.
pub fn run_pipeline(config: PipelineConfig) -> Result<RunManifest> {
    Ok(Pipeline::new(config)?.run(&RunOptions::default())?.manifest)
}
