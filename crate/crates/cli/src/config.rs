//! TOML configuration: endpoints, embedding providers, pools and analysis
//! panels. Relative paths resolve against the directory of the file that
//! names them.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lexiscope::admin::client::{EndpointConfig, RetryPolicy};
use lexiscope::admin::SessionOptions;
use lexiscope::embedding::{LoadOptions, RemoteEncoder, StaticVectors};
use lexiscope::Embedder;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub endpoints: BTreeMap<String, EndpointConfig>,
    pub providers: BTreeMap<String, ProviderSpec>,
    pub session: SessionSection,
    pub pools: PoolSection,
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProviderSpec {
    /// A whitespace-delimited vector file.
    Static {
        path: PathBuf,
        #[serde(default)]
        dimension: Option<usize>,
        #[serde(default)]
        skip_malformed: bool,
    },
    /// The sentence-encoder service.
    Remote { url: String, model: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub concurrency: usize,
    pub rate_limit: Option<f64>,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for SessionSection {
    fn default() -> Self {
        let d = SessionOptions::default();
        Self {
            concurrency: d.concurrency,
            rate_limit: d.rate_limit,
            max_attempts: d.retry.max_attempts,
            base_delay_ms: d.retry.base_delay_ms,
            max_delay_ms: d.retry.max_delay_ms,
        }
    }
}

impl SessionSection {
    pub fn options(&self, retry_failed: bool) -> SessionOptions {
        SessionOptions {
            concurrency: self.concurrency.max(1),
            retry: RetryPolicy {
                max_attempts: self.max_attempts.max(1),
                base_delay_ms: self.base_delay_ms,
                max_delay_ms: self.max_delay_ms,
            },
            rate_limit: self.rate_limit,
            retry_failed,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolSection {
    /// Word list used to calibrate DRAT thresholds.
    pub calibration: Option<PathBuf>,
    /// Random nouns drawn for the CDAT baseline.
    pub baseline_size: usize,
}

impl Default for PoolSection {
    fn default() -> Self {
        Self {
            calibration: None,
            baseline_size: 1000,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub benchmarks: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    /// Benchmarks to correlate against; empty means the built-in list.
    pub targets: Vec<String>,
    pub proxies: Vec<String>,
    pub min_n: Option<usize>,
    pub panels: Vec<PanelSpec>,
    pub nested: Vec<NestedSpec>,
}

/// A frontier panel: a fixed coupling, or one measured on a benchmark.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelSpec {
    pub name: String,
    #[serde(default)]
    pub benchmark: Option<String>,
    #[serde(default)]
    pub coupling: Option<f64>,
}

/// A nested regression; series are written `test/embedding`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedSpec {
    pub target: String,
    pub base: Vec<String>,
    pub added: Vec<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Registry {
    providers: BTreeMap<String, ProviderSpec>,
}

fn rebase(path: &mut PathBuf, dir: &Path) {
    if path.is_relative() {
        *path = dir.join(&*path);
    }
}

fn rebase_providers(providers: &mut BTreeMap<String, ProviderSpec>, dir: &Path) {
    for spec in providers.values_mut() {
        if let ProviderSpec::Static { path, .. } = spec {
            rebase(path, dir);
        }
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn parent(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl Config {
    /// Loads the config file (if any) and merges a provider registry over
    /// its `[providers]` table.
    pub fn load(config: Option<&Path>, registry: Option<&Path>) -> Result<Self> {
        let mut cfg = match config {
            Some(path) => {
                let mut cfg: Config = read_toml(path)?;
                let dir = parent(path);
                rebase_providers(&mut cfg.providers, &dir);
                for p in [
                    &mut cfg.pools.calibration,
                    &mut cfg.analysis.benchmarks,
                    &mut cfg.analysis.scores,
                ]
                .into_iter()
                .flatten()
                {
                    rebase(p, &dir);
                }
                cfg
            }
            None => Config::default(),
        };
        if let Some(path) = registry {
            let mut reg: Registry = read_toml(path)?;
            rebase_providers(&mut reg.providers, &parent(path));
            cfg.providers.extend(reg.providers);
        }
        Ok(cfg)
    }

    pub fn endpoint(&self, name: &str) -> Result<&EndpointConfig> {
        match self.endpoints.get(name) {
            Some(e) => Ok(e),
            None => bail!(crate::Usage(format!(
                "no endpoint named {name:?} in the configuration"
            ))),
        }
    }

    /// Opens a named provider. `keep` restricts a static file to the given
    /// tokens, which keeps memory bounded for very large vocabularies.
    pub fn provider(&self, name: &str, keep: Option<&HashSet<String>>) -> Result<Box<dyn Embedder>> {
        let Some(spec) = self.providers.get(name) else {
            bail!(crate::Usage(format!(
                "no provider named {name:?} in the registry"
            )));
        };
        log::info!("loading provider {name}");
        Ok(match spec {
            ProviderSpec::Static {
                path,
                dimension,
                skip_malformed,
            } => {
                let options = LoadOptions {
                    expected_dimension: *dimension,
                    skip_malformed: *skip_malformed,
                    keep: keep.cloned(),
                };
                let v = StaticVectors::load_with(path, options)
                    .with_context(|| format!("loading provider {name}"))?
                    .with_name(name);
                if v.skipped_records() > 0 {
                    log::warn!("{name}: skipped {} malformed records", v.skipped_records());
                }
                Box::new(v)
            }
            ProviderSpec::Remote { url, model } => Box::new(
                RemoteEncoder::connect(name, url.as_str(), model.as_str())
                    .with_context(|| format!("connecting to provider {name}"))?,
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let cfg: Config = toml::from_str(
            r#"
            [endpoints.router]
            base_url = "https://example.invalid/v1"
            api_key_env = "ROUTER_KEY"
            accepts_top_k = true

            [providers.glove]
            kind = "static"
            path = "vectors/glove.txt"
            dimension = 300

            [providers.sbert]
            kind = "remote"
            url = "http://localhost:8000"
            model = "all-mpnet-base-v2"

            [session]
            concurrency = 8
            rate_limit = 2.5

            [pools]
            baseline_size = 500

            [[analysis.panels]]
            name = "creative writing"
            benchmark = "arena_cw"

            [[analysis.nested]]
            target = "liveideabench"
            base = ["dat/glove"]
            added = ["drat/glove"]
            "#,
        )
        .unwrap();
        assert!(cfg.endpoints["router"].accepts_top_k);
        assert!(matches!(
            cfg.providers["glove"],
            ProviderSpec::Static {
                dimension: Some(300),
                ..
            }
        ));
        let opts = cfg.session.options(true);
        assert_eq!(
            (opts.concurrency, opts.rate_limit, opts.retry_failed),
            (8, Some(2.5), true)
        );
        assert_eq!(opts.retry.max_attempts, 5);
        assert_eq!(cfg.pools.baseline_size, 500);
        assert_eq!(cfg.analysis.nested[0].added, ["drat/glove"]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Config>("[session]\nconcurency = 3\n").is_err());
        assert!(toml::from_str::<Config>("[providers.x]\nkind = \"onnx\"\npath = \"a\"\n").is_err());
    }

    #[test]
    fn registry_paths_resolve_against_their_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("reg.toml"),
            "[providers.g]\nkind = \"static\"\npath = \"g.txt\"\n",
        )
        .unwrap();
        let cfg = Config::load(None, Some(&dir.path().join("reg.toml"))).unwrap();
        let ProviderSpec::Static { path, .. } = &cfg.providers["g"] else {
            panic!("expected a static provider");
        };
        assert_eq!(path, &dir.path().join("g.txt"));
    }
}
