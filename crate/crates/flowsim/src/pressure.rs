use crate::config::{FlowConfig, Role};
use crate::error::FlowError;
use crate::units::DARCY;

/// Static geometry of a run: face transmissibilities (without mobility),
/// pore volumes and well indices.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub nx: usize,
    pub ny: usize,
    /// x-face between (i, j) and (i+1, j), indexed by the left cell.
    pub tx: Vec<f64>,
    /// y-face between (i, j) and (i, j+1), indexed by the lower cell.
    pub ty: Vec<f64>,
    pub pore_volume: Vec<f64>,
    pub wells: Vec<WellCell>,
}

#[derive(Clone, Debug)]
pub struct WellCell {
    pub cell: usize,
    pub role: Role,
    pub control: f64,
    pub max_bhp: Option<f64>,
    /// Peaceman index without mobility, m³/day per (kgf/cm² · 1/cP).
    pub index: f64,
}

impl Discretization {
    /// `perm` is in mD, one value per cell.
    pub fn new(config: &FlowConfig, perm: &[f64]) -> Result<Self, FlowError> {
        config.validate()?;
        let g = config.grid;
        let n = g.nx * g.ny;
        if perm.len() != n {
            return Err(FlowError::FieldSize { expected: n, got: perm.len() });
        }
        if let Some(c) = perm.iter().position(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(FlowError::BadPermeability(c));
        }
        let h = config.rock.thickness;
        let harm = |a: f64, b: f64| 2.0 * a * b / (a + b);
        let mut tx = vec![0.0; n];
        let mut ty = vec![0.0; n];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = j * g.nx + i;
                if i + 1 < g.nx {
                    tx[c] = DARCY * h * g.dy / g.dx * harm(perm[c], perm[c + 1]);
                }
                if j + 1 < g.ny {
                    ty[c] = DARCY * h * g.dx / g.dy * harm(perm[c], perm[c + g.nx]);
                }
            }
        }
        let pore_volume = vec![g.dx * g.dy * h * config.rock.porosity; n];
        let r_eq = 0.2 * g.dx;
        let wells = config
            .wells
            .iter()
            .map(|w| {
                let cell = g.nx * w.j + w.i;
                WellCell {
                    cell,
                    role: w.role,
                    control: w.control,
                    max_bhp: w.max_bhp,
                    index: 2.0 * std::f64::consts::PI * DARCY * perm[cell] * h / (r_eq / w.radius).ln(),
                }
            })
            .collect();
        Ok(Self { nx: g.nx, ny: g.ny, tx, ty, pore_volume, wells })
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }
}

/// Pressure solution with the resulting inter-cell fluxes and well rates.
#[derive(Clone, Debug)]
pub struct PressureSolution {
    pub pressure: Vec<f64>,
    /// Flux across each x-face, positive in +i, m³/day.
    pub flux_x: Vec<f64>,
    /// Flux across each y-face, positive in +j.
    pub flux_y: Vec<f64>,
    /// Total well rate per well in config order, positive into the reservoir.
    pub well_rates: Vec<f64>,
    /// Bottom-hole pressure per well.
    pub well_bhp: Vec<f64>,
    /// Relative 2-norm of the linear-system residual.
    pub residual: f64,
}

/// Five-point symmetric operator: diagonal plus couplings to the +i and
/// +j neighbours (stored negated, i.e. as positive transmissibilities).
struct Stencil {
    nx: usize,
    diag: Vec<f64>,
    east: Vec<f64>,
    north: Vec<f64>,
}

impl Stencil {
    fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for c in 0..n {
            if self.east[c] != 0.0 {
                y[c] -= self.east[c] * x[c + 1];
                y[c + 1] -= self.east[c] * x[c];
            }
            if self.north[c] != 0.0 {
                y[c] -= self.north[c] * x[c + self.nx];
                y[c + self.nx] -= self.north[c] * x[c];
            }
        }
        y
    }

    /// Banded Cholesky solve; half-bandwidth is `nx`.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FlowError> {
        let n = self.diag.len();
        let b = self.nx.min(n.saturating_sub(1));
        let w = b + 1;
        // Row r holds entries (r, r-b..=r) at offsets 0..=b.
        let mut band = vec![0.0; n * w];
        for c in 0..n {
            band[c * w + b] = self.diag[c];
            if self.east[c] != 0.0 {
                band[(c + 1) * w + b - 1] = -self.east[c];
            }
            if self.north[c] != 0.0 {
                band[(c + self.nx) * w + b - self.nx] = -self.north[c];
            }
        }
        for r in 0..n {
            let lo = r.saturating_sub(b);
            let (done, rest) = band.split_at_mut(r * w);
            let row = &mut rest[..w];
            for c in lo..=r {
                let clo = c.saturating_sub(b).max(lo);
                let len = c - clo;
                let ri = b + clo - r;
                let dot: f64 = if c == r {
                    row[ri..ri + len].iter().map(|v| v * v).sum()
                } else {
                    let crow = &done[c * w..(c + 1) * w];
                    let ci = b + clo - c;
                    row[ri..ri + len].iter().zip(&crow[ci..ci + len]).map(|(u, v)| u * v).sum()
                };
                let s = row[b + c - r] - dot;
                if c == r {
                    if !(s > 0.0) {
                        return Err(FlowError::NotPositiveDefinite(r));
                    }
                    row[b] = s.sqrt();
                } else {
                    row[b + c - r] = s / done[c * w + b];
                }
            }
        }
        let mut y = rhs.to_vec();
        for r in 0..n {
            let lo = r.saturating_sub(b);
            let row = &band[r * w..(r + 1) * w];
            let dot: f64 = row[b + lo - r..b].iter().zip(&y[lo..r]).map(|(u, v)| u * v).sum();
            y[r] = (y[r] - dot) / row[b];
        }
        for r in (0..n).rev() {
            let row = &band[r * w..(r + 1) * w];
            y[r] /= row[b];
            let lo = r.saturating_sub(b);
            let yr = y[r];
            for (k, l) in (lo..r).zip(&row[b + lo - r..b]) {
                y[k] -= l * yr;
            }
        }
        Ok(y)
    }
}

/// Solves `∇·(λ_t K ∇p) + q = 0` for the given total mobility per cell.
/// Producers are held at their BHP, injectors at their rate unless that
/// would exceed their pressure ceiling.
pub fn solve_pressure(disc: &Discretization, mobility: &[f64]) -> Result<PressureSolution, FlowError> {
    if !disc.wells.iter().any(|w| w.role == Role::Producer) {
        return Err(FlowError::Singular);
    }
    let mut limited = vec![false; disc.wells.len()];
    for _ in 0..=2 * disc.wells.len() {
        let sol = solve_with_modes(disc, mobility, &limited)?;
        let mut changed = false;
        for (k, w) in disc.wells.iter().enumerate() {
            let Some(limit) = w.max_bhp else { continue };
            if !limited[k] && sol.well_bhp[k] > limit {
                limited[k] = true;
                changed = true;
            } else if limited[k] && sol.well_rates[k] > w.control {
                limited[k] = false;
                changed = true;
            }
        }
        if !changed {
            return Ok(sol);
        }
    }
    solve_with_modes(disc, mobility, &limited)
}

fn solve_with_modes(disc: &Discretization, mobility: &[f64], limited: &[bool]) -> Result<PressureSolution, FlowError> {
    let n = disc.cells();
    let nx = disc.nx;
    let face_mob = |a: usize, b: usize| 0.5 * (mobility[a] + mobility[b]);
    let mut a = Stencil { nx, diag: vec![0.0; n], east: vec![0.0; n], north: vec![0.0; n] };
    let mut rhs = vec![0.0; n];
    for c in 0..n {
        if disc.tx[c] > 0.0 {
            let t = disc.tx[c] * face_mob(c, c + 1);
            a.east[c] = t;
            a.diag[c] += t;
            a.diag[c + 1] += t;
        }
        if disc.ty[c] > 0.0 {
            let t = disc.ty[c] * face_mob(c, c + nx);
            a.north[c] = t;
            a.diag[c] += t;
            a.diag[c + nx] += t;
        }
    }
    let target = |k: usize, w: &WellCell| match (w.role, limited[k]) {
        (Role::Producer, _) => Some(w.control),
        (Role::Injector, true) => w.max_bhp,
        (Role::Injector, false) => None,
    };
    for (k, w) in disc.wells.iter().enumerate() {
        match target(k, w) {
            Some(bhp) => {
                let wi = w.index * mobility[w.cell];
                a.diag[w.cell] += wi;
                rhs[w.cell] += wi * bhp;
            }
            None => rhs[w.cell] += w.control,
        }
    }
    let pressure = a.solve(&rhs)?;
    if pressure.iter().any(|p| !p.is_finite()) {
        return Err(FlowError::NotPositiveDefinite(0));
    }
    let ax = a.mul(&pressure);
    let num: f64 = ax.iter().zip(&rhs).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let den: f64 = rhs.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    let mut flux_x = vec![0.0; n];
    let mut flux_y = vec![0.0; n];
    for c in 0..n {
        if disc.tx[c] > 0.0 {
            flux_x[c] = disc.tx[c] * face_mob(c, c + 1) * (pressure[c] - pressure[c + 1]);
        }
        if disc.ty[c] > 0.0 {
            flux_y[c] = disc.ty[c] * face_mob(c, c + nx) * (pressure[c] - pressure[c + nx]);
        }
    }
    let (well_rates, well_bhp) = disc
        .wells
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let wi = w.index * mobility[w.cell];
            match target(k, w) {
                Some(bhp) => (wi * (bhp - pressure[w.cell]), bhp),
                None => (w.control, pressure[w.cell] + w.control / wi),
            }
        })
        .unzip();
    Ok(PressureSolution { pressure, flux_x, flux_y, well_rates, well_bhp, residual: num / den })
}
