use crate::config::{FluidSpec, TransportMode};
use crate::error::FlowError;
use crate::pressure::{Discretization, PressureSolution};

/// Result of one saturation update.
#[derive(Clone, Debug)]
pub struct TransportStep {
    pub saturation: Vec<f64>,
    /// Water rate per well in config order, positive into the reservoir.
    pub water_rates: Vec<f64>,
    /// |accumulation − (injected − produced)·dt| relative to the injected volume.
    pub balance_error: f64,
}

/// Per-cell flux bookkeeping: total outflow (faces plus production) and
/// the list of upstream neighbours with their inflow.
struct CellFlux {
    outflow: Vec<f64>,
    inflow: Vec<Vec<(usize, f64)>>,
    injection: Vec<f64>,
}

fn cell_fluxes(disc: &Discretization, sol: &PressureSolution) -> CellFlux {
    let n = disc.cells();
    let nx = disc.nx;
    let mut outflow = vec![0.0; n];
    let mut inflow = vec![Vec::new(); n];
    let mut injection = vec![0.0; n];
    let mut face = |a: usize, b: usize, f: f64| {
        if f > 0.0 {
            outflow[a] += f;
            inflow[b].push((a, f));
        } else if f < 0.0 {
            outflow[b] -= f;
            inflow[a].push((b, -f));
        }
    };
    for c in 0..n {
        if disc.tx[c] > 0.0 {
            face(c, c + 1, sol.flux_x[c]);
        }
        if disc.ty[c] > 0.0 {
            face(c, c + nx, sol.flux_y[c]);
        }
    }
    for (w, q) in disc.wells.iter().zip(&sol.well_rates) {
        if *q >= 0.0 {
            injection[w.cell] += q;
        } else {
            outflow[w.cell] -= q;
        }
    }
    CellFlux { outflow, inflow, injection }
}

/// Fluxes frozen at one pressure solution, ready for repeated transport steps.
pub struct TransportPlan<'a> {
    disc: &'a Discretization,
    sol: &'a PressureSolution,
    fluid: &'a FluidSpec,
    flux: CellFlux,
    /// Cells by decreasing pressure: every upstream neighbour comes first.
    order: Vec<usize>,
}

impl<'a> TransportPlan<'a> {
    pub fn new(disc: &'a Discretization, sol: &'a PressureSolution, fluid: &'a FluidSpec) -> Self {
        let flux = cell_fluxes(disc, sol);
        let mut order: Vec<usize> = (0..disc.cells()).collect();
        order.sort_by(|&a, &b| sol.pressure[b].total_cmp(&sol.pressure[a]).then(a.cmp(&b)));
        Self { disc, sol, fluid, flux, order }
    }

    /// Largest explicit step that keeps upwind transport monotone.
    pub fn max_stable_dt(&self) -> f64 {
        let slope = self.fluid.max_frac_flow_slope();
        self.flux
            .outflow
            .iter()
            .zip(&self.disc.pore_volume)
            .filter(|(q, _)| **q > 0.0)
            .map(|(q, pv)| pv / (q * slope))
            .fold(f64::INFINITY, f64::min)
    }

    /// Advances water saturation over `dt` days.
    pub fn advance(&self, saturation: &[f64], dt: f64, mode: TransportMode) -> Result<TransportStep, FlowError> {
        let (disc, sol, fluid, flux) = (self.disc, self.sol, self.fluid, &self.flux);
        let n = disc.cells();
        let mut next = saturation.to_vec();
        match mode {
            TransportMode::Explicit => {
                let max_dt = self.max_stable_dt();
                if dt > max_dt {
                    return Err(FlowError::Cfl { dt, max_dt });
                }
                let f: Vec<f64> = saturation.iter().map(|&s| fluid.frac_flow(s)).collect();
                for c in 0..n {
                    let water_in: f64 =
                        flux.inflow[c].iter().map(|&(u, q)| q * f[u]).sum::<f64>() + flux.injection[c];
                    next[c] = saturation[c] + dt / disc.pore_volume[c] * (water_in - flux.outflow[c] * f[c]);
                }
            }
            TransportMode::Implicit => {
                let mut fnext = vec![0.0; n];
                for &c in &self.order {
                    let water_in: f64 =
                        flux.inflow[c].iter().map(|&(u, q)| q * fnext[u]).sum::<f64>() + flux.injection[c];
                    let s = solve_cell(fluid, disc.pore_volume[c] / dt, saturation[c], flux.outflow[c], water_in)
                        .ok_or(FlowError::Transport(c))?;
                    next[c] = s;
                    fnext[c] = fluid.frac_flow(s);
                }
            }
        }

        let f_used: Vec<f64> = match mode {
            TransportMode::Explicit => saturation.iter().map(|&s| fluid.frac_flow(s)).collect(),
            TransportMode::Implicit => next.iter().map(|&s| fluid.frac_flow(s)).collect(),
        };
        let water_rates: Vec<f64> = disc
            .wells
            .iter()
            .zip(&sol.well_rates)
            .map(|(w, &q)| if q >= 0.0 { q } else { q * f_used[w.cell] })
            .collect();
        let accumulation: f64 = (0..n).map(|c| disc.pore_volume[c] * (next[c] - saturation[c])).sum();
        let net: f64 = water_rates.iter().sum::<f64>() * dt;
        let injected: f64 = sol.well_rates.iter().filter(|q| **q > 0.0).sum::<f64>() * dt;
        let scale = injected.max(accumulation.abs()).max(f64::MIN_POSITIVE);
        let balance_error = if injected == 0.0 && accumulation == 0.0 && net == 0.0 {
            0.0
        } else {
            (accumulation - net).abs() / scale
        };
        Ok(TransportStep { saturation: next, water_rates, balance_error })
    }
}

/// Largest explicit step that keeps upwind transport monotone.
pub fn max_stable_dt(disc: &Discretization, sol: &PressureSolution, fluid: &FluidSpec) -> f64 {
    TransportPlan::new(disc, sol, fluid).max_stable_dt()
}

/// Advances water saturation over `dt` days with fluxes frozen at `sol`.
pub fn advance_saturation(
    disc: &Discretization,
    sol: &PressureSolution,
    fluid: &FluidSpec,
    saturation: &[f64],
    dt: f64,
    mode: TransportMode,
) -> Result<TransportStep, FlowError> {
    TransportPlan::new(disc, sol, fluid).advance(saturation, dt, mode)
}

/// Root of `a (s − s_old) + out · f(s) − water_in = 0` on the mobile range.
/// The residual is monotone, so a safeguarded Newton iteration always converges.
/// The bracket is the whole unit interval: with consistent fluxes the root
/// lies on the mobile range, and round-off must not make the bracket fail.
fn solve_cell(fluid: &FluidSpec, a: f64, s_old: f64, out: f64, water_in: f64) -> Option<f64> {
    let g = |s: f64| a * (s - s_old) + out * fluid.frac_flow(s) - water_in;
    let (mut lo, mut hi) = (0.0f64.min(s_old), 1.0f64.max(s_old));
    let (glo, ghi) = (g(lo), g(hi));
    if glo == 0.0 {
        return Some(lo);
    }
    if ghi == 0.0 {
        return Some(hi);
    }
    if glo > 0.0 || ghi < 0.0 {
        return None;
    }
    let tol = 1e-15 * (a + out).max(water_in).max(1.0);
    let mut s = s_old.clamp(lo, hi);
    for _ in 0..200 {
        let gs = g(s);
        if gs.abs() <= tol {
            return Some(s);
        }
        if gs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let dg = a + out * fluid.frac_flow_slope(s);
        let newton = s - gs / dg;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - s).abs() <= 1e-15 || hi - lo <= 1e-15 {
            return Some(next);
        }
        s = next;
    }
    Some(s)
}
