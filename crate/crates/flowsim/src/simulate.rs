use rayon::prelude::*;

use crate::config::{ChannelKind, FlowConfig, Role, TransportMode};
use crate::data::DataLayout;
use crate::error::FlowError;
use crate::pressure::{solve_pressure, Discretization, PressureSolution};
use crate::transport::TransportPlan;

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub pressure: Vec<f64>,
    pub saturation: Vec<f64>,
    pub time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub pressure_solves: usize,
    pub transport_steps: usize,
    pub max_balance_error: f64,
    pub max_pressure_residual: f64,
    /// Largest |Σ well rates| relative to the largest well rate.
    pub max_rate_imbalance: f64,
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub data: Vec<f64>,
    pub state: SimState,
    pub diagnostics: Diagnostics,
}

/// Runs the schedule on a log-permeability field (ln mD) and returns the
/// data vector in [`DataLayout`] order.
pub fn simulate(config: &FlowConfig, logperm: &[f64]) -> Result<SimResult, FlowError> {
    let perm: Vec<f64> = logperm.iter().map(|v| v.exp()).collect();
    let disc = Discretization::new(config, &perm)?;
    let fluid = &config.fluid;
    let n = disc.cells();
    let nw = disc.wells.len();
    let mut sat = vec![fluid.swc; n];
    let mut diag = Diagnostics::default();
    let mut cum_total = vec![0.0; nw];
    let mut cum_water = vec![0.0; nw];
    let mut t = 0.0;
    let mut data = Vec::new();

    let pressure_step = |sat: &[f64], diag: &mut Diagnostics| -> Result<PressureSolution, FlowError> {
        let mob: Vec<f64> = sat.iter().map(|&s| fluid.total_mobility(s)).collect();
        let sol = solve_pressure(&disc, &mob)?;
        diag.pressure_solves += 1;
        diag.max_pressure_residual = diag.max_pressure_residual.max(sol.residual);
        let sum: f64 = sol.well_rates.iter().sum();
        let big = sol.well_rates.iter().fold(0.0f64, |m, q| m.max(q.abs())).max(f64::MIN_POSITIVE);
        diag.max_rate_imbalance = diag.max_rate_imbalance.max(sum.abs() / big);
        Ok(sol)
    };

    let schedule = config.schedule;
    let mut last = None;
    for &t_report in &schedule.report_times() {
        while t < t_report - 1e-9 {
            let dt = schedule.pressure_step.min(t_report - t);
            let sol = pressure_step(&sat, &mut diag)?;
            let plan = TransportPlan::new(&disc, &sol, fluid);
            let limit = 0.9 * plan.max_stable_dt();
            let mut done = 0.0;
            while done < dt - 1e-12 {
                let sub = match schedule.transport {
                    TransportMode::Implicit => dt / schedule.transport_substeps as f64,
                    TransportMode::Explicit => {
                        let remaining = dt - done;
                        remaining / (remaining / limit).ceil().max(1.0)
                    }
                };
                let step = plan.advance(&sat, sub, schedule.transport)?;
                diag.transport_steps += 1;
                diag.max_balance_error = diag.max_balance_error.max(step.balance_error);
                for w in 0..nw {
                    cum_total[w] += sol.well_rates[w] * sub;
                    cum_water[w] += step.water_rates[w] * sub;
                }
                sat = step.saturation;
                done += sub;
            }
            t += dt;
        }
        let sol = pressure_step(&sat, &mut diag)?;
        append_report(config, &disc, &sol, &sat, &cum_total, &cum_water, &mut data);
        last = Some(sol);
    }
    let pressure = last.map(|s| s.pressure).unwrap_or_default();
    Ok(SimResult { data, state: SimState { pressure, saturation: sat, time: t }, diagnostics: diag })
}

fn append_report(
    config: &FlowConfig,
    disc: &Discretization,
    sol: &PressureSolution,
    sat: &[f64],
    cum_total: &[f64],
    cum_water: &[f64],
    data: &mut Vec<f64>,
) {
    let order = config
        .wells
        .iter()
        .enumerate()
        .filter(|(_, w)| w.role == Role::Producer)
        .chain(config.wells.iter().enumerate().filter(|(_, w)| w.role == Role::Injector));
    for (k, w) in order {
        let q = sol.well_rates[k];
        let f = config.fluid.frac_flow(sat[disc.wells[k].cell]);
        let chans = match w.role {
            Role::Producer => &config.channels.producer,
            Role::Injector => &config.channels.injector,
        };
        for &c in chans {
            data.push(match c {
                ChannelKind::OilRate => (-q * (1.0 - f)).max(0.0),
                ChannelKind::WaterRate => (-q * f).max(0.0),
                ChannelKind::LiquidRate => (-q).max(0.0),
                ChannelKind::InjectionRate => q.max(0.0),
                ChannelKind::Bhp => sol.well_bhp[k],
                ChannelKind::CumulativeOil => -(cum_total[k] - cum_water[k]),
                ChannelKind::CumulativeWater => -cum_water[k],
                ChannelKind::CumulativeInjection => cum_total[k].max(0.0),
            });
        }
    }
}

/// Simulates every member in parallel. The first failure is reported with
/// its member index.
pub fn simulate_ensemble(config: &FlowConfig, members: &[Vec<f64>]) -> Result<Vec<SimResult>, FlowError> {
    members
        .par_iter()
        .enumerate()
        .map(|(member, m)| {
            simulate(config, m).map_err(|e| FlowError::Member { member, source: Box::new(e) })
        })
        .collect()
}

/// Length of the data vector for a configuration.
pub fn data_len(config: &FlowConfig) -> usize {
    DataLayout::new(config).len()
}
