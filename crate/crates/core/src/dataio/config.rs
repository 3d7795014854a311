//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::envs::EnvKind;
use crate::error::{Error, ParseErrorKind, Result};
use crate::gcql::GcqlConfig;
use crate::gctd3bc::{Gctd3bcConfig, LambdaMode};
use crate::oorb::OorbConfig;
use crate::orchestrator::{Schedule, Variant};

/// Environment variable holding the default output directory.
pub const OUT_DIR_VAR: &str = "APL_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AgentKind {
    #[default]
    Gcql,
    Gctd3bc,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Gcql => "gcql",
            AgentKind::Gctd3bc => "gctd3bc",
        }
    }

    /// Default online-buffer probability for this agent.
    pub fn default_p(self) -> f64 {
        match self {
            AgentKind::Gcql => 0.5,
            AgentKind::Gctd3bc => 0.1,
        }
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcql" => Ok(AgentKind::Gcql),
            "gctd3bc" => Ok(AgentKind::Gctd3bc),
            _ => Err(Error::InvalidConfig(format!(
                "unknown agent '{s}' (expected gcql or gctd3bc)"
            ))),
        }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub agent: AgentKind,
    pub env: EnvKind,
    pub variant: Variant,
    pub dataset: Option<PathBuf>,
    /// Stored reference returns; computed when absent.
    pub references: Option<PathBuf>,
    pub ref_episodes: usize,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Online-source probability; `None` means the agent's default.
    pub p: Option<f64>,
    pub oorb: OorbConfig,
    pub schedule: Schedule,
    pub gcql: GcqlConfig,
    pub gctd3bc: Gctd3bcConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let out_dir = std::env::var_os(OUT_DIR_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
        Self {
            agent: AgentKind::Gcql,
            env: EnvKind::Pendulum,
            variant: Variant::Full,
            dataset: None,
            references: None,
            ref_episodes: 100,
            out_dir,
            seed: 0,
            p: None,
            oorb: OorbConfig::default(),
            schedule: Schedule::default(),
            gcql: GcqlConfig::default(),
            gctd3bc: Gctd3bcConfig::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> std::result::Result<T, ParseErrorKind> {
    raw.parse().map_err(|_| ParseErrorKind::BadValue {
        key: key.to_string(),
        value: raw.to_string(),
    })
}

fn widths(key: &str, raw: &str) -> std::result::Result<Vec<usize>, ParseErrorKind> {
    let bad = || ParseErrorKind::BadValue {
        key: key.to_string(),
        value: raw.to_string(),
    };
    let out = raw
        .split(',')
        .map(|w| w.trim().parse::<usize>().ok().filter(|&w| w > 0))
        .collect::<Option<Vec<_>>>()
        .ok_or_else(bad)?;
    Ok(out)
}

fn optional_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

impl RunConfig {
    /// Online-source probability actually used.
    pub fn effective_p(&self) -> f64 {
        self.p.unwrap_or(self.agent.default_p())
    }

    pub fn oorb_config(&self) -> OorbConfig {
        OorbConfig {
            p: self.effective_p(),
            ..self.oorb
        }
    }

    /// Sets one key. Keys common to both agents set both.
    pub fn set(&mut self, key: &str, raw: &str) -> std::result::Result<(), ParseErrorKind> {
        let raw = raw.trim();
        let (g, t) = (&mut self.gcql, &mut self.gctd3bc);
        match key {
            "agent" => self.agent = value::<AgentKind>(key, raw)?,
            "env" => self.env = value(key, raw)?,
            "variant" => self.variant = value(key, raw)?,
            "dataset" => self.dataset = optional_path(raw),
            "references" => self.references = optional_path(raw),
            "ref_episodes" => self.ref_episodes = value(key, raw)?,
            "out_dir" => self.out_dir = PathBuf::from(raw),
            "seed" => self.seed = value(key, raw)?,
            "p" => self.p = Some(value(key, raw)?),
            "t_s" => self.oorb.starting_size = value(key, raw)?,
            "online_capacity" => self.oorb.online_capacity = value(key, raw)?,
            "offline_capacity" => self.oorb.offline_capacity = value(key, raw)?,
            "batch_size" => self.oorb.batch_size = value(key, raw)?,
            "t_initial" => self.schedule.t_initial = value(key, raw)?,
            "t_on" => self.schedule.t_on = value(key, raw)?,
            "t_off" => self.schedule.t_off = value(key, raw)?,
            "s_total" => self.schedule.s_total = value(key, raw)?,
            "eval_every" => self.schedule.eval_every = value(key, raw)?,
            "eval_episodes" => self.schedule.eval_episodes = value(key, raw)?,
            "gamma" => (g.gamma, t.gamma) = (value(key, raw)?, value(key, raw)?),
            "tau" => (g.tau, t.tau) = (value(key, raw)?, value(key, raw)?),
            "critic_lr" => (g.critic_lr, t.critic_lr) = (value(key, raw)?, value(key, raw)?),
            "actor_lr" => (g.actor_lr, t.actor_lr) = (value(key, raw)?, value(key, raw)?),
            "hidden" => {
                let w = widths(key, raw)?;
                g.hidden = w.clone();
                t.hidden = w;
            }
            "alpha_cql" => g.alpha_cql = value(key, raw)?,
            "alpha_ent" => g.alpha_ent = value(key, raw)?,
            "n_penalty_samples" => g.n_penalty_samples = value(key, raw)?,
            "n_critics" => g.n_critics = value(key, raw)?,
            "subset_size" => g.subset_size = value(key, raw)?,
            "per_transition_subset" => g.per_transition_subset = value(key, raw)?,
            "policy_noise" => t.policy_noise = value(key, raw)?,
            "noise_clip" => t.noise_clip = value(key, raw)?,
            "policy_delay" => t.policy_delay = value(key, raw)?,
            "lambda_mode" => t.lambda_mode = value::<LambdaMode>(key, raw)?,
            "lambda_fixed" => t.lambda_fixed = value(key, raw)?,
            "alpha_norm" => t.alpha_norm = value(key, raw)?,
            "explore_noise" => t.explore_noise = value(key, raw)?,
            _ => return Err(ParseErrorKind::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies `key=value` text on top of the current settings.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let parse = |kind| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                kind,
            };
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| parse(ParseErrorKind::Malformed(format!("expected key = value, got '{line}'"))))?;
            self.set(key.trim(), raw).map_err(parse)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, path)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, item: &str) -> Result<()> {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override '{item}' is not key=value")))?;
        self.set(key.trim(), raw)
            .map_err(|kind| Error::InvalidConfig(format!("override '{item}': {kind}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.oorb_config().validate()?;
        self.schedule.validate()?;
        match self.agent {
            AgentKind::Gcql => self.gcql.validate(),
            AgentKind::Gctd3bc => self.gctd3bc.validate(),
        }?;
        if self.ref_episodes == 0 {
            return Err(Error::InvalidConfig("ref_episodes must be positive".into()));
        }
        Ok(())
    }

    /// Every key with its effective value; parsing it back yields the same run.
    pub fn snapshot(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let (g, t) = (&self.gcql, &self.gctd3bc);
        let (gamma, tau, critic_lr, actor_lr, hidden) = match self.agent {
            AgentKind::Gcql => (g.gamma, g.tau, g.critic_lr, g.actor_lr, &g.hidden),
            AgentKind::Gctd3bc => (t.gamma, t.tau, t.critic_lr, t.actor_lr, &t.hidden),
        };
        let hidden = hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let entries: Vec<(&str, String)> = vec![
            ("agent", self.agent.name().into()),
            ("env", self.env.name().into()),
            ("variant", self.variant.to_string()),
            ("dataset", path(&self.dataset)),
            ("references", path(&self.references)),
            ("ref_episodes", self.ref_episodes.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("p", self.effective_p().to_string()),
            ("t_s", self.oorb.starting_size.to_string()),
            ("online_capacity", self.oorb.online_capacity.to_string()),
            ("offline_capacity", self.oorb.offline_capacity.to_string()),
            ("batch_size", self.oorb.batch_size.to_string()),
            ("t_initial", self.schedule.t_initial.to_string()),
            ("t_on", self.schedule.t_on.to_string()),
            ("t_off", self.schedule.t_off.to_string()),
            ("s_total", self.schedule.s_total.to_string()),
            ("eval_every", self.schedule.eval_every.to_string()),
            ("eval_episodes", self.schedule.eval_episodes.to_string()),
            ("gamma", gamma.to_string()),
            ("tau", tau.to_string()),
            ("critic_lr", critic_lr.to_string()),
            ("actor_lr", actor_lr.to_string()),
            ("hidden", hidden),
            ("alpha_cql", g.alpha_cql.to_string()),
            ("alpha_ent", g.alpha_ent.to_string()),
            ("n_penalty_samples", g.n_penalty_samples.to_string()),
            ("n_critics", g.n_critics.to_string()),
            ("subset_size", g.subset_size.to_string()),
            ("per_transition_subset", g.per_transition_subset.to_string()),
            ("policy_noise", t.policy_noise.to_string()),
            ("noise_clip", t.noise_clip.to_string()),
            ("policy_delay", t.policy_delay.to_string()),
            ("lambda_mode", t.lambda_mode.to_string()),
            ("lambda_fixed", t.lambda_fixed.to_string()),
            ("alpha_norm", t.alpha_norm.to_string()),
            ("explore_noise", t.explore_noise.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in entries {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_text(text, Path::new("run.cfg"))
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let err = parse("agent = gcql\n\nalhpa_cql = 2\n").unwrap_err();
        match err {
            Error::Parse { line, kind, .. } => {
                assert_eq!(line, 3);
                assert_eq!(kind, ParseErrorKind::UnknownKey("alhpa_cql".into()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_name_the_key() {
        let err = parse("batch_size = many").unwrap_err();
        assert!(err.to_string().contains("batch_size"), "{err}");
        assert!(parse("hidden = 64,0").is_err());
        assert!(parse("no equals sign").is_err());
    }

    #[test]
    fn p_defaults_per_agent() {
        assert_eq!(parse("agent = gcql").unwrap().effective_p(), 0.5);
        assert_eq!(parse("agent = gctd3bc").unwrap().effective_p(), 0.1);
        assert_eq!(parse("agent = gctd3bc\np = 0.3").unwrap().effective_p(), 0.3);
    }

    #[test]
    fn overrides_show_up_in_the_snapshot() {
        let mut cfg = parse("# comment\nagent = gcql  # trailing\n").unwrap();
        cfg.apply_override("p=0.7").unwrap();
        assert!(cfg.snapshot().lines().any(|l| l == "p = 0.7"));
        assert!(cfg.apply_override("q=1").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = parse(
            "agent = gctd3bc\nhidden = 32,16\nlambda_mode = fixed\ngamma = 0.95\nseed = 12\ndataset = data/x.jsonl",
        )
        .unwrap();
        cfg.out_dir = PathBuf::from("out");
        let back = parse(&cfg.snapshot()).unwrap();
        assert_eq!(back.snapshot(), cfg.snapshot());
        assert_eq!(back.gctd3bc, cfg.gctd3bc);
        assert_eq!(back.effective_p(), cfg.effective_p());
    }
}
