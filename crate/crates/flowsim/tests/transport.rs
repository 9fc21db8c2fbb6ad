use resgen_flowsim::*;
use resgen_geogen::Grid;

fn well(name: &str, i: usize, j: usize, role: Role, control: f64) -> WellSpec {
    WellSpec { name: name.into(), i, j, role, control, radius: 0.1, max_bhp: None }
}

#[test]
fn zero_flux_leaves_saturation_unchanged() {
    let g = Grid { nx: 8, ny: 8, dx: 40.0, dy: 40.0 };
    let cfg = FlowConfig {
        wells: vec![well("I", 1, 1, Role::Injector, 0.0), well("P", 6, 6, Role::Producer, 200.0)],
        ..FlowConfig::five_spot(g)
    };
    let disc = Discretization::new(&cfg, &[100.0; 64]).unwrap();
    let sat: Vec<f64> = (0..64).map(|c| 0.2 + 0.6 * (c % 9) as f64 / 8.0).collect();
    let mob: Vec<f64> = sat.iter().map(|&s| cfg.fluid.total_mobility(s)).collect();
    let sol = solve_pressure(&disc, &mob).unwrap();
    let still = PressureSolution {
        flux_x: vec![0.0; 64],
        flux_y: vec![0.0; 64],
        well_rates: vec![0.0; 2],
        ..sol.clone()
    };
    for mode in [TransportMode::Implicit, TransportMode::Explicit] {
        let step = advance_saturation(&disc, &still, &cfg.fluid, &sat, 30.0, mode).unwrap();
        assert_eq!(step.saturation, sat);
        // The solved field carries only round-off fluxes.
        let step = advance_saturation(&disc, &sol, &cfg.fluid, &sat, 30.0, mode).unwrap();
        for (a, b) in step.saturation.iter().zip(&sat) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn single_cell_fills_like_a_bucket() {
    let pv = 40.0 * 40.0 * 10.0 * 0.2;
    let disc = Discretization {
        nx: 1,
        ny: 1,
        tx: vec![0.0],
        ty: vec![0.0],
        pore_volume: vec![pv],
        wells: vec![WellCell { cell: 0, role: Role::Injector, control: 20.0, max_bhp: None, index: 1.0 }],
    };
    let sol = PressureSolution {
        pressure: vec![250.0],
        flux_x: vec![0.0],
        flux_y: vec![0.0],
        well_rates: vec![20.0],
        well_bhp: vec![260.0],
        residual: 0.0,
    };
    let fluid = FluidSpec::default();
    let dt = 15.0;
    for mode in [TransportMode::Implicit, TransportMode::Explicit] {
        let step = advance_saturation(&disc, &sol, &fluid, &[0.2], dt, mode).unwrap();
        let expected = 0.2 + 20.0 * dt / pv;
        assert!((step.saturation[0] - expected).abs() < 1e-14, "{mode:?}: {}", step.saturation[0]);
        assert!(step.balance_error < 1e-12);
    }
}

fn corey_f(s: f64) -> f64 {
    let se = ((s - 0.2) / 0.6).clamp(0.0, 1.0);
    se * se / (se * se + (1.0 - se) * (1.0 - se))
}

/// Welge tangent: the front saturation satisfies f'(S) = f(S) / (S − S_wc).
fn welge_front() -> (f64, f64) {
    let dfds = |s: f64| (corey_f(s + 1e-7) - corey_f(s - 1e-7)) / 2e-7;
    let g = |s: f64| dfds(s) * (s - 0.2) - corey_f(s);
    let (mut lo, mut hi) = (0.25, 0.79);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, corey_f(s) / (s - 0.2))
}

fn buckley_leverett(mode: TransportMode, step: f64) -> (f64, f64) {
    let n = 200;
    let g = Grid { nx: n, ny: 1, dx: 10.0, dy: 10.0 };
    let q = 100.0;
    let t = 120.0;
    let cfg = FlowConfig {
        wells: vec![well("I", 0, 0, Role::Injector, q), well("P", n - 1, 0, Role::Producer, 200.0)],
        schedule: Schedule { total_days: t, report_interval: t, pressure_step: step, transport_substeps: 1, transport: mode },
        ..FlowConfig::five_spot(g)
    };
    let res = simulate(&cfg, &vec![100f64.ln(); n]).unwrap();
    let (sf, slope) = welge_front();
    let area = g.dy * cfg.rock.thickness;
    let exact = q * t * slope / (area * cfg.rock.porosity);
    // Numerical front: where saturation falls through the midpoint of the shock.
    let mid = 0.5 * (sf + 0.2);
    let s = &res.state.saturation;
    let k = (0..n - 1).find(|&k| s[k] >= mid && s[k + 1] < mid).unwrap();
    let frac = (s[k] - mid) / (s[k] - s[k + 1]);
    let x = (k as f64 + 0.5 + frac) * g.dx;
    (x, exact)
}

#[test]
fn buckley_leverett_front_matches_welge_construction_explicit() {
    let (x, exact) = buckley_leverett(TransportMode::Explicit, 1.0);
    assert!((x - exact).abs() < 0.05 * exact, "front {x} vs {exact}");
}

#[test]
fn buckley_leverett_front_matches_welge_construction_implicit() {
    let (x, exact) = buckley_leverett(TransportMode::Implicit, 1.0);
    assert!((x - exact).abs() < 0.05 * exact, "front {x} vs {exact}");
}

#[test]
fn explicit_step_beyond_cfl_reports_the_limit() {
    let g = Grid { nx: 10, ny: 1, dx: 10.0, dy: 10.0 };
    let cfg = FlowConfig {
        wells: vec![well("I", 0, 0, Role::Injector, 100.0), well("P", 9, 0, Role::Producer, 200.0)],
        ..FlowConfig::five_spot(g)
    };
    let disc = Discretization::new(&cfg, &[100.0; 10]).unwrap();
    let mob = vec![1.0; 10];
    let sol = solve_pressure(&disc, &mob).unwrap();
    let limit = max_stable_dt(&disc, &sol, &cfg.fluid);
    match advance_saturation(&disc, &sol, &cfg.fluid, &[0.2; 10], 2.0 * limit, TransportMode::Explicit) {
        Err(FlowError::Cfl { max_dt, .. }) => assert!((max_dt - limit).abs() < 1e-12 * limit),
        other => panic!("expected CFL error, got {other:?}"),
    }
    assert!(advance_saturation(&disc, &sol, &cfg.fluid, &[0.2; 10], 0.5 * limit, TransportMode::Explicit).is_ok());
    assert!(advance_saturation(&disc, &sol, &cfg.fluid, &[0.2; 10], 50.0 * limit, TransportMode::Implicit).is_ok());
}
