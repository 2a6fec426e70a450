//! Run directories: a JSON manifest plus one tensor container per array.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::belief::{verify_consistency_with, BeliefTensor, ConsistencyReport, RewardMap, RewardSource};
use crate::config::RunConfig;
use crate::deep::{DeepRecoveryReport, DeepRun, Network, HIDDEN_ACTIVATION};
use crate::envs::EnvName;
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::io::tensor::Tensor;
use crate::mdp::{ActionId, CodecDoc, Environment, StateId};
use crate::par::Execution;
use crate::rng::RNG_ALGORITHM;
use crate::tabular::QTable;
use crate::train::{Checkpoint, TabularModel, TabularRun};

pub const FORMAT_NAME: &str = "beliefmap-run";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Tabular,
    Deep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvInfo {
    pub name: EnvName,
    pub codec: CodecDoc,
    pub num_states: usize,
    pub num_actions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub file: String,
    pub dims: Vec<usize>,
}

/// A value table and the belief map that should decompose it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TablePair {
    pub q: String,
    pub h: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub table: String,
    pub max_abs_err: f64,
    pub state: StateId,
    pub action: ActionId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub pairs: usize,
    /// Absent when either side is constant.
    pub pearson: Option<f64>,
    pub max_abs_dev: f64,
}

impl From<&DeepRecoveryReport> for RecoverySummary {
    fn from(r: &DeepRecoveryReport) -> Self {
        RecoverySummary {
            pairs: r.pairs,
            pearson: r.pearson.is_finite().then_some(r.pearson),
            max_abs_dev: r.max_abs_dev,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepSummary {
    pub hidden_activation: String,
    pub q_params: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_params: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoverySummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub kind: ArtifactKind,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub rng_algorithm: String,
    pub env: EnvInfo,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub pairs: Vec<TablePair>,
    /// Final consistency against the environment reward map.
    #[serde(default)]
    pub consistency: Vec<ConsistencyEntry>,
    #[serde(default)]
    pub checkpoints: Vec<Checkpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deep: Option<DeepSummary>,
}

/// Per-pair outcome of re-checking an artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub tolerance: f64,
    pub passed: bool,
    pub reward_source: RewardSource,
    pub tables: Vec<ConsistencyEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunArtifact {
    pub manifest: Manifest,
    pub tensors: BTreeMap<String, Tensor>,
}

fn entry(name: &str, report: &ConsistencyReport) -> ConsistencyEntry {
    ConsistencyEntry {
        table: name.to_string(),
        max_abs_err: report.max_abs_err,
        state: report.state,
        action: report.action,
    }
}

fn env_info(config: &RunConfig, env: &dyn Environment) -> EnvInfo {
    EnvInfo {
        name: config.env.name(),
        codec: env.codec(),
        num_states: env.spec().num_states,
        num_actions: env.spec().num_actions,
    }
}

fn bool_tensor(ns: usize, na: usize, flags: &[bool]) -> Result<Tensor> {
    Tensor::new(vec![ns, na], flags.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
}

fn curve_tensor(returns: &[f64], lengths: &[usize]) -> Result<Tensor> {
    let data = returns
        .iter()
        .zip(lengths)
        .flat_map(|(&r, &l)| [r, l as f64])
        .collect();
    Tensor::new(vec![returns.len(), 2], data)
}

impl RunArtifact {
    fn base(config: &RunConfig, env: &dyn Environment, kind: ArtifactKind) -> Self {
        RunArtifact {
            manifest: Manifest {
                format: FORMAT_NAME.into(),
                format_version: FORMAT_VERSION,
                kind,
                config: config.clone(),
                config_hash: config.hash(),
                seed: config.seed,
                rng_algorithm: RNG_ALGORITHM.into(),
                env: env_info(config, env),
                tensors: Vec::new(),
                pairs: Vec::new(),
                consistency: Vec::new(),
                checkpoints: Vec::new(),
                deep: None,
            },
            tensors: BTreeMap::new(),
        }
    }

    /// Adds (or replaces) a named tensor stored as `<name>.blfm`.
    pub fn insert(&mut self, name: &str, tensor: Tensor) {
        self.manifest.tensors.retain(|e| e.name != name);
        self.manifest.tensors.push(TensorEntry {
            name: name.into(),
            file: format!("{name}.blfm"),
            dims: tensor.dims.clone(),
        });
        self.tensors.insert(name.into(), tensor);
    }

    pub fn from_tabular(config: &RunConfig, run: &TabularRun) -> Result<Self> {
        let env = config.env.build()?;
        let mut art = RunArtifact::base(config, env.as_ref(), ArtifactKind::Tabular);
        let (ns, na) = (art.manifest.env.num_states, art.manifest.env.num_actions);
        let names: &[(&str, &str)] = match run.model {
            TabularModel::Single { .. } => &[("q", "h")],
            TabularModel::Twin { .. } => &[("q_a", "h_a"), ("q_b", "h_b")],
        };
        for ((_, q, h), (qn, hn)) in run.model.pairs().into_iter().zip(names) {
            art.insert(qn, Tensor::new(vec![ns, na], q.values().to_vec())?);
            art.insert(hn, Tensor::new(h.dims().to_vec(), h.values().to_vec())?);
            art.manifest.pairs.push(TablePair {
                q: qn.to_string(),
                h: hn.to_string(),
            });
            let rep = verify_consistency_with(h, q, &run.reward, Execution::default())?;
            art.manifest.consistency.push(entry(qn, &rep));
        }
        art.insert("reward", Tensor::new(vec![ns, na], run.reward.values().to_vec())?);
        art.insert("reward_proxy", Tensor::new(vec![ns, na], run.proxy.values().to_vec())?);
        art.insert("reward_observed", bool_tensor(ns, na, run.proxy.observed())?);
        art.insert("curve", curve_tensor(&run.episode_returns, &run.episode_lengths)?);
        art.manifest.checkpoints = run.checkpoints.clone();
        Ok(art)
    }

    pub fn from_deep(
        config: &RunConfig,
        run: &DeepRun,
        eval: Option<EvalReport>,
        recovery: Option<&DeepRecoveryReport>,
    ) -> Result<Self> {
        let env = config.env.build()?;
        let mut art = RunArtifact::base(config, env.as_ref(), ArtifactKind::Deep);
        let (ns, na) = (art.manifest.env.num_states, art.manifest.env.num_actions);
        let flat = |net: &Network| Tensor::new(vec![net.num_params()], net.flat_params());
        art.insert("qnet", flat(&run.qnet)?);
        if let Some(h) = &run.hnet {
            art.insert("hnet", flat(h)?);
        }
        art.insert("reward", Tensor::new(vec![ns, na], run.reward.values().to_vec())?);
        art.insert("curve", curve_tensor(&run.episode_returns, &run.episode_lengths)?);
        art.manifest.deep = Some(DeepSummary {
            hidden_activation: HIDDEN_ACTIVATION.into(),
            q_params: "qnet".into(),
            h_params: run.hnet.as_ref().map(|_| "hnet".into()),
            eval,
            recovery: recovery.map(RecoverySummary::from),
        });
        Ok(art)
    }

    pub fn manifest_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.manifest)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for e in &self.manifest.tensors {
            self.tensor(&e.name)?.write(&dir.join(&e.file))?;
        }
        fs::write(dir.join(MANIFEST_FILE), self.manifest_json()?)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != FORMAT_NAME || manifest.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported artifact {} v{}",
                manifest.format, manifest.format_version
            )));
        }
        let mut tensors = BTreeMap::new();
        for e in &manifest.tensors {
            if e.file.contains(['/', '\\']) || e.file.starts_with('.') {
                return Err(Error::Format(format!("tensor file name {:?} not allowed", e.file)));
            }
            let t = Tensor::read(&dir.join(&e.file))?;
            if t.dims != e.dims {
                return Err(Error::Format(format!(
                    "tensor {} has dims {:?}, manifest says {:?}",
                    e.name, t.dims, e.dims
                )));
            }
            tensors.insert(e.name.clone(), t);
        }
        let art = RunArtifact { manifest, tensors };
        art.check_shapes()?;
        Ok(art)
    }

    fn check_shapes(&self) -> Result<()> {
        let (ns, na) = (self.manifest.env.num_states, self.manifest.env.num_actions);
        let n = ns * na;
        for pair in &self.manifest.pairs {
            let q = self.tensor(&pair.q)?;
            let h = self.tensor(&pair.h)?;
            if q.dims != [ns, na] || h.dims != [ns, na, ns, na] {
                return Err(Error::Format(format!(
                    "pair ({}, {}) does not match {ns} states x {na} actions",
                    pair.q, pair.h
                )));
            }
        }
        if self.tensor("reward")?.len() != n {
            return Err(Error::Format("reward tensor has the wrong size".into()));
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Format(format!("artifact has no tensor {name:?}")))
    }

    pub fn env(&self) -> Result<Box<dyn Environment>> {
        self.manifest.config.env.build()
    }

    pub fn belief(&self, name: &str) -> Result<BeliefTensor> {
        let (ns, na) = (self.manifest.env.num_states, self.manifest.env.num_actions);
        BeliefTensor::from_values(ns, na, self.manifest.config.gamma, self.tensor(name)?.data.clone())
    }

    /// A stored Q-table, with the environment's legal-action sets.
    pub fn qtable(&self, name: &str) -> Result<QTable> {
        let (ns, na) = (self.manifest.env.num_states, self.manifest.env.num_actions);
        let env = self.env()?;
        QTable::from_values(ns, na, self.tensor(name)?.data.clone())?
            .with_legal((0..ns).map(|s| env.legal_actions(s)).collect())
    }

    pub fn reward(&self) -> Result<RewardMap> {
        let (ns, na) = (self.manifest.env.num_states, self.manifest.env.num_actions);
        RewardMap::from_parts(
            ns,
            na,
            self.tensor("reward")?.data.clone(),
            vec![true; ns * na],
            RewardSource::EnvGroundTruth,
        )
    }

    pub fn proxy_reward(&self) -> Result<RewardMap> {
        let (ns, na) = (self.manifest.env.num_states, self.manifest.env.num_actions);
        RewardMap::from_parts(
            ns,
            na,
            self.tensor("reward_proxy")?.data.clone(),
            self.tensor("reward_observed")?.data.iter().map(|&v| v != 0.0).collect(),
            RewardSource::EmpiricalProxy,
        )
    }

    pub fn reward_for(&self, source: RewardSource) -> Result<RewardMap> {
        match source {
            RewardSource::EnvGroundTruth => self.reward(),
            RewardSource::EmpiricalProxy => self.proxy_reward(),
        }
    }

    /// Recomputes consistency of every stored pair.
    pub fn verify(&self, tolerance: f64, source: RewardSource, exec: Execution) -> Result<VerifyReport> {
        if self.manifest.pairs.is_empty() {
            return Err(Error::InvalidArgument(
                "artifact holds no tabular value/belief pairs".into(),
            ));
        }
        let r = self.reward_for(source)?;
        let mut tables = Vec::new();
        for pair in &self.manifest.pairs {
            let rep = verify_consistency_with(&self.belief(&pair.h)?, &self.qtable(&pair.q)?, &r, exec)?;
            tables.push(entry(&pair.q, &rep));
        }
        let passed = tables.iter().all(|t| t.max_abs_err <= tolerance);
        Ok(VerifyReport {
            tolerance,
            passed,
            reward_source: source,
            tables,
        })
    }

    /// Networks rebuilt from stored parameters.
    pub fn networks(&self) -> Result<(Network, Option<Network>)> {
        let deep = self
            .manifest
            .config
            .deep
            .as_ref()
            .ok_or_else(|| Error::Format("artifact has no deep configuration".into()))?;
        let summary = self
            .manifest
            .deep
            .as_ref()
            .ok_or_else(|| Error::Format("artifact has no deep summary".into()))?;
        let mut q = Network::new(&deep.q_arch, 0)?;
        q.set_flat_params(&self.tensor(&summary.q_params)?.data)?;
        let h = match &summary.h_params {
            Some(name) => {
                let mut h = Network::new(&deep.h_arch, 0)?;
                h.set_flat_params(&self.tensor(name)?.data)?;
                Some(h)
            }
            None => None,
        };
        Ok((q, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Algorithm, Preset};
    use crate::train::train_tabular;

    fn small_run(algo: Algorithm) -> (RunConfig, TabularRun) {
        let mut cfg = RunConfig::preset(Preset::Chain, algo, 3);
        cfg.episodes = 50;
        cfg.checkpoint_every = 10;
        let run = train_tabular(&cfg).unwrap();
        (cfg, run)
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        for algo in [Algorithm::Q, Algorithm::DoubleQ] {
            let (cfg, run) = small_run(algo);
            let art = RunArtifact::from_tabular(&cfg, &run).unwrap();
            let d1 = tempfile::tempdir().unwrap();
            let d2 = tempfile::tempdir().unwrap();
            art.write(d1.path()).unwrap();
            let back = RunArtifact::read(d1.path()).unwrap();
            assert_eq!(back, art);
            back.write(d2.path()).unwrap();
            for e in &art.manifest.tensors {
                assert_eq!(
                    fs::read(d1.path().join(&e.file)).unwrap(),
                    fs::read(d2.path().join(&e.file)).unwrap()
                );
            }
            assert_eq!(
                fs::read(d1.path().join(MANIFEST_FILE)).unwrap(),
                fs::read(d2.path().join(MANIFEST_FILE)).unwrap()
            );
        }
    }

    #[test]
    fn verify_passes_then_flags_perturbation() {
        let (cfg, run) = small_run(Algorithm::Q);
        let mut art = RunArtifact::from_tabular(&cfg, &run).unwrap();
        let rep = art.verify(1e-6, RewardSource::EnvGroundTruth, Execution::Sequential).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(art.verify(1e-6, RewardSource::EmpiricalProxy, Execution::Sequential).unwrap().passed);
        let n = 4 * 2;
        let h = art.tensors.get_mut("h").unwrap();
        // H(s=1, a=1, s'=2, a'=0) gains mass on a pair with reward.
        h.data[(1 * 2 + 1) * n + 2 * 2] += 0.5;
        let rep = art.verify(1e-6, RewardSource::EnvGroundTruth, Execution::Sequential).unwrap();
        assert!(!rep.passed);
        assert_eq!((rep.tables[0].state, rep.tables[0].action), (1, 1));
    }

    #[test]
    fn corrupt_artifacts_rejected() {
        let (cfg, run) = small_run(Algorithm::Q);
        let art = RunArtifact::from_tabular(&cfg, &run).unwrap();
        let dir = tempfile::tempdir().unwrap();
        art.write(dir.path()).unwrap();
        let h = Tensor::new(vec![2, 2], vec![0.0; 4]).unwrap();
        h.write(&dir.path().join("h.blfm")).unwrap();
        assert!(RunArtifact::read(dir.path()).is_err());
        fs::write(dir.path().join("h.blfm"), b"garbage").unwrap();
        assert!(matches!(RunArtifact::read(dir.path()), Err(Error::Format(_))));
        fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        assert!(RunArtifact::read(dir.path()).is_err());
    }
}
