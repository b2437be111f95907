use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curation::FilterOptions;
use crate::eval::{Normalization, Scheme};
use crate::metrics::{AgeAggregate, MetricsConfig, Property, ReviewerAggregate};
use crate::model::{ModelConfig, RedundancyScale};
use crate::stats::DEFAULT_EXACT_MAX;
use crate::szz::TimeBasis;
use crate::{Error, Result};

/// Everything a pipeline run depends on besides the input files.
///
/// Loaded from a TOML file of top-level keys. Relative paths are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub repo: PathBuf,
    pub branch: String,
    /// Issues as CSV or newline-JSON.
    pub issues: PathBuf,
    pub reviews: Option<PathBuf>,
    /// Label store log (newline-JSON) or a CSV of final `issue_id,verdict`.
    pub labels: Option<PathBuf>,
    pub suspicious: Option<PathBuf>,
    pub output: PathBuf,

    pub patterns: Vec<String>,
    pub skip_merges: bool,
    pub cosmetic_filter: bool,
    pub date_filter: bool,
    pub date_basis: TimeBasis,

    pub recency_unit_days: f64,
    pub age_aggregate: AgeAggregate,
    pub reviewer_aggregate: ReviewerAggregate,
    pub include_merges: bool,

    pub churn_threshold: f64,
    pub files_threshold: f64,
    pub drop_mislabeled: bool,
    pub months: u32,

    pub schemes: Vec<Scheme>,
    /// Candidate properties; every property when empty.
    pub properties: Vec<Property>,
    pub collinearity_threshold: f64,
    pub redundancy_threshold: f64,
    pub redundancy_scale: RedundancyScale,
    pub spline_df: usize,
    pub normalization: Normalization,

    pub wilcoxon_exact_max: usize,
    pub density_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let metrics = MetricsConfig::default();
        let filter = FilterOptions::default();
        let model = ModelConfig::default();
        Self {
            repo: PathBuf::from("."),
            branch: "main".into(),
            issues: PathBuf::from("issues.csv"),
            reviews: None,
            labels: None,
            suspicious: None,
            output: PathBuf::from("jitlab-out"),
            patterns: vec!["Closes-Bug: #{id}".into()],
            skip_merges: true,
            cosmetic_filter: true,
            date_filter: true,
            date_basis: TimeBasis::default(),
            recency_unit_days: metrics.recency_unit_days,
            age_aggregate: metrics.age_aggregate,
            reviewer_aggregate: metrics.reviewer_aggregate,
            include_merges: metrics.include_merges,
            churn_threshold: filter.churn_threshold,
            files_threshold: filter.files_threshold,
            drop_mislabeled: filter.drop_mislabeled,
            months: filter.period_months,
            schemes: Scheme::ALL.to_vec(),
            properties: Vec::new(),
            collinearity_threshold: model.collinearity_threshold,
            redundancy_threshold: model.redundancy_threshold,
            redundancy_scale: model.redundancy_scale,
            spline_df: model.spline_df,
            normalization: Normalization::default(),
            wilcoxon_exact_max: DEFAULT_EXACT_MAX,
            density_points: 128,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Makes every relative path relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.repo);
        fix(&mut self.issues);
        fix(&mut self.output);
        for p in [&mut self.reviews, &mut self.labels, &mut self.suspicious].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("churn_threshold", self.churn_threshold),
            ("files_threshold", self.files_threshold),
            ("collinearity_threshold", self.collinearity_threshold),
            ("redundancy_threshold", self.redundancy_threshold),
            ("recency_unit_days", self.recency_unit_days),
            ("spline_df", self.spline_df as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("collinearity_threshold", self.collinearity_threshold),
            ("redundancy_threshold", self.redundancy_threshold),
        ] {
            if v > 1.0 {
                return Err(Error::Config(format!("{name} must be at most 1, got {v}")));
            }
        }
        if !matches!(self.months, 3 | 6) {
            return Err(Error::Config(format!("months must be 3 or 6, got {}", self.months)));
        }
        if self.patterns.is_empty() {
            return Err(Error::Config("at least one issue-id pattern is required".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        if self.density_points < 2 {
            return Err(Error::Config("density_points must be at least 2".into()));
        }
        Ok(())
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            recency_unit_days: self.recency_unit_days,
            age_aggregate: self.age_aggregate,
            reviewer_aggregate: self.reviewer_aggregate,
            include_merges: self.include_merges,
        }
    }

    pub fn filter_options(&self) -> FilterOptions {
        FilterOptions {
            churn_threshold: self.churn_threshold,
            files_threshold: self.files_threshold,
            drop_mislabeled: self.drop_mislabeled,
            period_months: self.months,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            collinearity_threshold: self.collinearity_threshold,
            redundancy_threshold: self.redundancy_threshold,
            redundancy_scale: self.redundancy_scale,
            spline_df: self.spline_df,
        }
    }

    pub fn candidates(&self) -> Vec<Property> {
        if self.properties.is_empty() {
            Property::ALL.to_vec()
        } else {
            self.properties.clone()
        }
    }
}
