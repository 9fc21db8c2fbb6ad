use resgen_geogen::Grid;
use serde::{Deserialize, Serialize};

use crate::error::FlowError;

/// Corey relative permeability and viscosities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSpec {
    pub mu_w: f64,
    pub mu_o: f64,
    pub swc: f64,
    pub sor: f64,
    pub nw: f64,
    pub no: f64,
    pub krw_end: f64,
    pub kro_end: f64,
}

impl Default for FluidSpec {
    fn default() -> Self {
        Self {
            mu_w: 1.0,
            mu_o: 1.0,
            swc: 0.2,
            sor: 0.2,
            nw: 2.0,
            no: 2.0,
            krw_end: 1.0,
            kro_end: 1.0,
        }
    }
}

impl FluidSpec {
    fn se(&self, s: f64) -> f64 {
        ((s - self.swc) / (1.0 - self.swc - self.sor)).clamp(0.0, 1.0)
    }

    /// Water and oil mobilities, 1/cP.
    pub fn mobilities(&self, s: f64) -> (f64, f64) {
        let se = self.se(s);
        (
            self.krw_end * pow(se, self.nw) / self.mu_w,
            self.kro_end * pow(1.0 - se, self.no) / self.mu_o,
        )
    }

    /// Derivative of the fractional flow with respect to saturation.
    pub fn frac_flow_slope(&self, s: f64) -> f64 {
        let span = 1.0 - self.swc - self.sor;
        let se = (s - self.swc) / span;
        if !(0.0..=1.0).contains(&se) {
            return 0.0;
        }
        let (w, o) = self.mobilities(s);
        let dw = self.krw_end * self.nw * pow(se, self.nw - 1.0) / self.mu_w / span;
        let d_o = -self.kro_end * self.no * pow(1.0 - se, self.no - 1.0) / self.mu_o / span;
        (dw * o - w * d_o) / ((w + o) * (w + o))
    }

    pub fn total_mobility(&self, s: f64) -> f64 {
        let (w, o) = self.mobilities(s);
        w + o
    }

    /// Water fractional flow.
    pub fn frac_flow(&self, s: f64) -> f64 {
        let (w, o) = self.mobilities(s);
        w / (w + o)
    }

    /// Largest slope of the fractional-flow curve, found on a fine grid.
    pub fn max_frac_flow_slope(&self) -> f64 {
        let n = 2000;
        let (lo, hi) = (self.swc, 1.0 - self.sor);
        let h = (hi - lo) / n as f64;
        (0..n)
            .map(|k| {
                let a = lo + k as f64 * h;
                (self.frac_flow(a + h) - self.frac_flow(a)) / h
            })
            .fold(0.0, f64::max)
            * 1.05
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let ok = self.mu_w > 0.0
            && self.mu_o > 0.0
            && self.swc >= 0.0
            && self.sor >= 0.0
            && self.swc + self.sor < 1.0
            && self.nw >= 1.0
            && self.no >= 1.0
            && self.krw_end > 0.0
            && self.kro_end > 0.0;
        if !ok {
            return Err(FlowError::Config(format!("invalid fluid {self:?}")));
        }
        Ok(())
    }
}

fn pow(x: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < 16.0 {
        x.powi(e as i32)
    } else {
        x.powf(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RockSpec {
    /// Layer thickness, m.
    pub thickness: f64,
    pub porosity: f64,
}

impl Default for RockSpec {
    fn default() -> Self {
        Self {
            thickness: 10.0,
            porosity: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Producer,
    Injector,
}

/// A vertical well in one cell. Producers hold `control` as bottom-hole
/// pressure (kgf/cm²); injectors as water rate (m³/day).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WellSpec {
    pub name: String,
    pub i: usize,
    pub j: usize,
    pub role: Role,
    pub control: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Injectors only: bottom-hole pressure ceiling. When the target rate
    /// would exceed it the well switches to pressure control.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_bhp: Option<f64>,
}

fn default_radius() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransportMode {
    /// Upwind implicit, solved cell by cell in upstream order; any step size.
    #[default]
    Implicit,
    /// Upwind explicit, sub-stepped to respect the CFL limit.
    Explicit,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub total_days: f64,
    pub report_interval: f64,
    /// Pressure update interval, days.
    pub pressure_step: f64,
    /// Implicit transport steps per pressure step.
    pub transport_substeps: usize,
    pub transport: TransportMode,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            total_days: 900.0,
            report_interval: 90.0,
            pressure_step: 15.0,
            transport_substeps: 5,
            transport: TransportMode::Implicit,
        }
    }
}

impl Schedule {
    pub fn report_times(&self) -> Vec<f64> {
        let n = (self.total_days / self.report_interval + 1e-9).floor() as usize;
        (1..=n).map(|k| k as f64 * self.report_interval).collect()
    }
}

/// A measured quantity at a well.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelKind {
    OilRate,
    WaterRate,
    LiquidRate,
    InjectionRate,
    Bhp,
    CumulativeOil,
    CumulativeWater,
    CumulativeInjection,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::OilRate => "oil-rate",
            ChannelKind::WaterRate => "water-rate",
            ChannelKind::LiquidRate => "liquid-rate",
            ChannelKind::InjectionRate => "injection-rate",
            ChannelKind::Bhp => "bhp",
            ChannelKind::CumulativeOil => "cumulative-oil",
            ChannelKind::CumulativeWater => "cumulative-water",
            ChannelKind::CumulativeInjection => "cumulative-injection",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataChannels {
    pub producer: Vec<ChannelKind>,
    pub injector: Vec<ChannelKind>,
}

impl Default for DataChannels {
    fn default() -> Self {
        Self {
            producer: vec![ChannelKind::OilRate, ChannelKind::WaterRate, ChannelKind::Bhp],
            injector: vec![ChannelKind::Bhp],
        }
    }
}

/// Measurement error standard deviations by quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// m³/day, producer rates.
    pub production_rate: f64,
    /// m³/day, injector rates.
    pub injection_rate: f64,
    /// kgf/cm².
    pub bhp: f64,
    /// m³, cumulative volumes.
    pub cumulative: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            production_rate: 4.0,
            injection_rate: 3.0,
            bhp: 2.0,
            cumulative: 100.0,
        }
    }
}

impl NoiseSpec {
    pub fn std_for(&self, kind: ChannelKind) -> f64 {
        match kind {
            ChannelKind::OilRate | ChannelKind::WaterRate | ChannelKind::LiquidRate => self.production_rate,
            ChannelKind::InjectionRate => self.injection_rate,
            ChannelKind::Bhp => self.bhp,
            ChannelKind::CumulativeOil | ChannelKind::CumulativeWater | ChannelKind::CumulativeInjection => {
                self.cumulative
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub grid: Grid,
    #[serde(default)]
    pub fluid: FluidSpec,
    #[serde(default)]
    pub rock: RockSpec,
    pub wells: Vec<WellSpec>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub channels: DataChannels,
    #[serde(default)]
    pub noise: NoiseSpec,
}

pub const DEFAULT_PRODUCER_BHP: f64 = 200.0;
pub const DEFAULT_INJECTION_RATE: f64 = 500.0;

/// Nine producers on a 3×3 lattice with an injector at the centre of each of
/// the four squares: four five-spots sharing their corner wells.
pub fn five_spot_wells(grid: Grid, margin: usize) -> Vec<WellSpec> {
    let margin = margin.min(grid.nx.min(grid.ny).saturating_sub(1) / 2);
    let pos = |n: usize, k: usize| -> usize {
        let span = (n - 1 - 2 * margin) as f64;
        (margin as f64 + k as f64 * span / 2.0).round() as usize
    };
    let mid = |n: usize, k: usize| -> usize {
        let span = (n - 1 - 2 * margin) as f64;
        (margin as f64 + (2 * k + 1) as f64 * span / 4.0).round() as usize
    };
    let mut wells = Vec::new();
    for b in 0..3 {
        for a in 0..3 {
            wells.push(WellSpec {
                name: format!("P{}", wells.len() + 1),
                i: pos(grid.nx, a),
                j: pos(grid.ny, b),
                role: Role::Producer,
                control: DEFAULT_PRODUCER_BHP,
                radius: default_radius(),
                max_bhp: None,
            });
        }
    }
    for b in 0..2 {
        for a in 0..2 {
            wells.push(WellSpec {
                name: format!("I{}", b * 2 + a + 1),
                i: mid(grid.nx, a),
                j: mid(grid.ny, b),
                role: Role::Injector,
                control: DEFAULT_INJECTION_RATE,
                radius: default_radius(),
                max_bhp: None,
            });
        }
    }
    wells
}

impl FlowConfig {
    /// Default physics and schedule with the 9 + 4 five-spot layout.
    pub fn five_spot(grid: Grid) -> Self {
        Self::with_wells(grid, five_spot_wells(grid, 2))
    }

    /// Default physics and schedule with custom wells.
    pub fn with_wells(grid: Grid, wells: Vec<WellSpec>) -> Self {
        Self {
            grid,
            fluid: FluidSpec::default(),
            rock: RockSpec::default(),
            wells,
            schedule: Schedule::default(),
            channels: DataChannels::default(),
            noise: NoiseSpec::default(),
        }
    }

    pub fn producers(&self) -> impl Iterator<Item = &WellSpec> {
        self.wells.iter().filter(|w| w.role == Role::Producer)
    }

    pub fn injectors(&self) -> impl Iterator<Item = &WellSpec> {
        self.wells.iter().filter(|w| w.role == Role::Injector)
    }

    /// Wells in data order: producers, then injectors, each in config order.
    pub fn data_wells(&self) -> Vec<&WellSpec> {
        self.producers().chain(self.injectors()).collect()
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let g = &self.grid;
        if g.nx == 0 || g.ny == 0 || !(g.dx > 0.0) || !(g.dy > 0.0) {
            return Err(FlowError::Config(format!("invalid grid {g:?}")));
        }
        self.fluid.validate()?;
        if !(self.rock.thickness > 0.0) || !(self.rock.porosity > 0.0 && self.rock.porosity <= 1.0) {
            return Err(FlowError::Config(format!("invalid rock {:?}", self.rock)));
        }
        let s = &self.schedule;
        if s.transport_substeps == 0 || !(s.pressure_step > 0.0) || !(s.report_interval > 0.0) || !(s.total_days >= s.report_interval) {
            return Err(FlowError::Config(format!("invalid schedule {s:?}")));
        }
        let mut seen = std::collections::HashSet::new();
        for w in &self.wells {
            if w.i >= g.nx || w.j >= g.ny {
                return Err(FlowError::Config(format!("well {} at ({}, {}) is outside the grid", w.name, w.i, w.j)));
            }
            if !seen.insert((w.i, w.j)) {
                return Err(FlowError::Config(format!("two wells share cell ({}, {})", w.i, w.j)));
            }
            if !(w.radius > 0.0) || !w.control.is_finite() || (w.role == Role::Injector && w.control < 0.0) {
                return Err(FlowError::Config(format!("invalid control or radius for well {}", w.name)));
            }
            if w.max_bhp.is_some() && w.role == Role::Producer {
                return Err(FlowError::Config(format!("producer {} cannot carry an injection pressure limit", w.name)));
            }
            if 0.2 * g.dx.min(g.dy) <= w.radius {
                return Err(FlowError::Config(format!("well {} radius exceeds the equivalent radius", w.name)));
            }
        }
        if self.producers().next().is_none() {
            return Err(FlowError::Singular);
        }
        Ok(())
    }
}
