//! The four subcommands. Each one stages its CSV/text outputs on a
//! [`RunWriter`](crate::output::RunWriter); `main` commits the batch (plus
//! the manifest) only after the command returns cleanly.

use crate::output::{prob, RunWriter};
use auxkey_core::analysis::{
    capture_nodes, grid_ratios, regular_op_totals, resilience as resilience_of, storage_audit,
    sweep_analytic, FigureId, GRID_D,
};
use auxkey_core::crypto::{seeded_rng, NodeId};
use auxkey_core::engine::{streams, RoundReport};
use auxkey_core::protocol::{OpCounts, ProtocolError, SetupServer};
use auxkey_core::{SimConfig, Simulation};
use rayon::prelude::*;
use std::fmt::Write as _;

use crate::CliError;

/// `analytic`: evaluate the closed-form curves over the standard sweep grid
/// (one series per d, m/n from 0.01 to 0.10) and write `curves.csv`.
pub fn analytic(cfg: &SimConfig, w: &mut RunWriter) -> Result<(), CliError> {
    let mut csv = String::from("figure,series,x,y,kind\n");
    for figure in [FigureId::Fig1, FigureId::Fig2] {
        for pt in sweep_analytic(figure, cfg.n, &GRID_D, &grid_ratios())? {
            let _ = writeln!(
                csv,
                "{},{},{},{},{}",
                pt.figure.as_str(),
                pt.series,
                prob(pt.x),
                prob(pt.y),
                pt.kind.as_str()
            );
        }
    }
    w.stage("curves.csv", csv.into_bytes());
    Ok(())
}

/// `simulate`: run every trial (in parallel — trials are independent and
/// seeded individually, so the output is order-stable), then write
/// `rounds.csv` with per-trial rows sorted by (trial, round) followed by
/// per-round aggregate rows, and optionally one transcript file per trial.
pub fn simulate(cfg: &SimConfig, with_transcript: bool, w: &mut RunWriter) -> Result<(), CliError> {
    type TrialOutput = (Vec<RoundReport>, Option<Vec<String>>);
    let per_trial: Result<Vec<TrialOutput>, CliError> = (0..u64::from(cfg.trials))
        .into_par_iter()
        .map(|t| {
            let mut sim = Simulation::new(cfg, t)?;
            if with_transcript {
                sim.enable_transcript();
            }
            let reports = sim.run_all_rounds();
            let transcript = sim.transcript().map(<[String]>::to_vec);
            Ok((reports, transcript))
        })
        .collect();
    let per_trial = per_trial?;

    let rounds = cfg.mobility_rounds as usize + 1;
    let mut csv = String::from("trial,round,attempted,direct_ok,supplemental_ok,failed,empirical_p\n");
    for (reports, _) in &per_trial {
        for r in reports {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{}",
                r.trial,
                r.round,
                r.attempted,
                r.direct_ok,
                r.supplemental_ok,
                r.failed,
                prob(round_p(r))
            );
        }
    }
    for round in 0..rounds {
        let mut agg = RoundReport {
            trial: 0,
            round: round as u32,
            attempted: 0,
            direct_ok: 0,
            supplemental_ok: 0,
            failed: 0,
        };
        for (reports, _) in &per_trial {
            let r = &reports[round];
            agg.attempted += r.attempted;
            agg.direct_ok += r.direct_ok;
            agg.supplemental_ok += r.supplemental_ok;
            agg.failed += r.failed;
        }
        let _ = writeln!(
            csv,
            "agg,{},{},{},{},{},{}",
            agg.round,
            agg.attempted,
            agg.direct_ok,
            agg.supplemental_ok,
            agg.failed,
            prob(round_p(&agg))
        );
    }
    w.stage("rounds.csv", csv.into_bytes());

    for (t, (_, transcript)) in per_trial.iter().enumerate() {
        if let Some(lines) = transcript {
            let mut body = lines.join("\n");
            if !body.is_empty() {
                body.push('\n');
            }
            w.stage(&format!("transcript_t{t}.txt"), body.into_bytes());
        }
    }
    Ok(())
}

/// A round with no eligible pairs left nothing unestablished, so the CSV
/// reports 1.0 rather than a hole in the column.
fn round_p(r: &RoundReport) -> f64 {
    r.empirical_p().unwrap_or(1.0)
}

/// `resilience`: complete one full run (trial 0), then mount an independent
/// capture experiment per requested c and write `resilience.csv`. Each c gets
/// its own RNG lane so adding or removing a point never shifts the others.
pub fn resilience(cfg: &SimConfig, captures: &[u64], w: &mut RunWriter) -> Result<(), CliError> {
    for &c in captures {
        if c > cfg.n {
            return Err(CliError::Config(crate::config::ConfigError {
                line: 0,
                message: format!("cannot capture {c} of {} regular nodes", cfg.n),
            }));
        }
    }
    let mut sim = Simulation::new(cfg, 0)?;
    sim.run_all_rounds();

    let mut csv = String::from("c,total_links,compromised_links,fraction\n");
    for &c in captures {
        let mut rng = seeded_rng(cfg.seed, streams::for_trial(0, streams::CAPTURE_BASE | c));
        let know = capture_nodes(&sim, c, &mut rng)?;
        let rep = resilience_of(&know, &sim);
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            rep.captured,
            rep.total_links,
            rep.compromised_links,
            prob(rep.fraction)
        );
    }
    w.stage("resilience.csv", csv.into_bytes());
    Ok(())
}

pub fn default_captures() -> Vec<u64> {
    (1..=10).map(|i| i * 50).collect()
}

/// `audit`: storage counts per role from a completed run, the summed
/// primitive-operation counters across all regular nodes, and measured
/// per-handshake costs from isolated three-node exchanges.
pub fn audit(cfg: &SimConfig, w: &mut RunWriter) -> Result<(), CliError> {
    let mut sim = Simulation::new(cfg, 0)?;
    sim.run_all_rounds();

    let mut csv = String::from("metric,value\n");
    for role in storage_audit(&sim) {
        let _ = writeln!(csv, "{}_nodes,{}", role.role, role.nodes);
        let _ = writeln!(csv, "{}_preloaded_min,{}", role.role, role.preloaded_min);
        let _ = writeln!(csv, "{}_preloaded_max,{}", role.role, role.preloaded_max);
        let _ = writeln!(
            csv,
            "{}_session_keys_total,{}",
            role.role, role.session_keys_total
        );
    }
    let totals = regular_op_totals(&sim);
    let _ = writeln!(csv, "regular_macs_total,{}", totals.macs);
    let _ = writeln!(csv, "regular_encryptions_total,{}", totals.encryptions);
    let _ = writeln!(csv, "regular_decryptions_total,{}", totals.decryptions);
    let _ = writeln!(csv, "regular_prf_calls_total,{}", totals.prf_calls);

    let (initiator, responder) = case1_costs()?;
    let requester = case2_costs()?;
    for (side, ops) in [
        ("case1_initiator", initiator),
        ("case1_responder", responder),
        ("case2_requester", requester),
    ] {
        let _ = writeln!(csv, "{side}_macs,{}", ops.macs);
        let _ = writeln!(csv, "{side}_encryptions,{}", ops.encryptions);
        let _ = writeln!(csv, "{side}_decryptions,{}", ops.decryptions);
    }
    w.stage("audit.csv", csv.into_bytes());
    Ok(())
}

/// One clean Case-1 exchange on a throwaway three-node bench; the per-side
/// costs are structural, so any working seed reports the same numbers.
fn case1_costs() -> Result<(OpCounts, OpCounts), ProtocolError> {
    let mut rng = seeded_rng(7, 0);
    let mut server = SetupServer::new(&mut rng);
    let mut u = server.provision_regular(NodeId(0))?;
    let mut v = server.provision_regular(NodeId(1))?;
    let aux = server.provision_auxiliary(NodeId(2))?;
    let m1 = u.initiate(v.id(), &mut rng)?;
    let m2 = v.handle_init(&m1, &mut rng)?;
    let m3 = aux.handle_request(&m2, &mut rng)?;
    let m4 = v.responder_handle_reply(&m3, u.id())?;
    u.initiator_handle_forward(&m4, v.id())?;
    Ok((u.op_counts(), v.op_counts()))
}

fn case2_costs() -> Result<OpCounts, ProtocolError> {
    let mut rng = seeded_rng(7, 1);
    let mut server = SetupServer::new(&mut rng);
    let mut u = server.provision_regular(NodeId(0))?;
    let mut aux = server.provision_auxiliary(NodeId(1))?;
    auxkey_core::protocol::aux_direct(&mut u, &mut aux, &mut rng)?;
    Ok(u.op_counts())
}
