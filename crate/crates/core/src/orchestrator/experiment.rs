use super::eval::References;
use super::record::RunRecord;
use super::train::{pretrain, run, Streams};
use crate::agent::Agent;
use crate::dataio::{AgentKind, RunConfig};
use crate::error::Result;
use crate::gcql::Gcql;
use crate::gctd3bc::Gctd3bc;
use crate::oorb::{Oorb, Transition};

/// Freshly initialized agent for `cfg`, drawn from the master seed's init stream.
pub fn build_agent(cfg: &RunConfig) -> Result<Box<dyn Agent>> {
    let spec = cfg.env.spec();
    let mut rng = Streams::init(cfg.seed);
    Ok(match cfg.agent {
        AgentKind::Gcql => Box::new(Gcql::new(
            spec.obs_dim,
            &spec.action_low,
            &spec.action_high,
            cfg.gcql.clone(),
            &mut rng,
        )?),
        AgentKind::Gctd3bc => Box::new(Gctd3bc::new(
            spec.obs_dim,
            &spec.action_low,
            &spec.action_high,
            cfg.gctd3bc.clone(),
            &mut rng,
        )?),
    })
}

/// Pretraining followed by the online loop. Rows reach `record` as they are
/// produced, so a failed run still leaves its history behind.
pub fn execute(
    cfg: &RunConfig,
    dataset: &[Transition],
    refs: References,
    record: &mut RunRecord,
) -> Result<Box<dyn Agent>> {
    cfg.validate()?;
    let spec = cfg.env.spec();
    let mut oorb = Oorb::new(cfg.oorb_config(), spec.obs_dim, spec.act_dim)?;
    oorb.load_offline(dataset)?;
    let mut agent = build_agent(cfg)?;
    let mut streams = Streams::new(cfg.seed);
    record.master_seed = cfg.seed;
    record.config_snapshot = cfg.snapshot();
    record.references = Some(refs);
    let report = pretrain(&mut *agent, &oorb, &cfg.schedule, &mut streams, record)?;
    run(
        &mut *agent,
        cfg.env,
        &mut oorb,
        &cfg.schedule,
        cfg.variant,
        &refs,
        &mut streams,
        &report,
        record,
    )?;
    Ok(agent)
}
