use std::time::Duration;

/// One direction of the space-ground link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub rate_bps: u64,
    pub delay_ms: f64,
    pub loss_prob: f64,
}

impl LinkParams {
    pub fn new(rate_bps: u64, delay_ms: f64, loss_prob: f64) -> Self {
        LinkParams {
            rate_bps,
            delay_ms,
            loss_prob,
        }
    }

    pub fn delay(&self) -> Duration {
        Duration::from_secs_f64(self.delay_ms / 1000.0)
    }

    /// Time to clock `bytes` onto the link.
    pub fn serialization(&self, bytes: usize) -> Duration {
        let nanos = (bytes as u128 * 8 * 1_000_000_000).div_ceil(self.rate_bps.max(1) as u128);
        Duration::from_nanos(nanos as u64)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rate_bps == 0 {
            return Err("rate_bps must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(format!("loss_prob {} outside [0, 1]", self.loss_prob));
        }
        if !(self.delay_ms >= 0.0 && self.delay_ms.is_finite()) {
            return Err(format!("delay_ms {} must be a non-negative number", self.delay_ms));
        }
        Ok(())
    }
}

/// Half-open interval `[start_s, end_s)` in simulation seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
}

impl Window {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Window { start_s, end_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t_s: f64) -> bool {
        self.start_s <= t_s && t_s < self.end_s
    }

    /// Like `contains`, on the nanosecond grid used by the simulator.
    pub fn contains_time(&self, t: Duration) -> bool {
        at_seconds(self.start_s) <= t && t < at_seconds(self.end_s)
    }
}

/// Simulation instant for `s` seconds, rounded up to a whole nanosecond so an
/// edge event never fires before the edge it marks.
pub fn at_seconds(s: f64) -> Duration {
    Duration::from_nanos((s.max(0.0) * 1e9).ceil() as u64)
}

pub const DEFAULT_ORBIT_PERIOD_S: u64 = 5880;

/// Contact schedule between the spacecraft and its ground station.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPlan {
    pub orbit_period_s: u64,
    pub windows: Vec<Window>,
    pub down: LinkParams,
    pub up: LinkParams,
    pub outages: Vec<Window>,
    pub seed: u64,
}

impl Default for ContactPlan {
    fn default() -> Self {
        ContactPlan {
            orbit_period_s: DEFAULT_ORBIT_PERIOD_S,
            windows: Vec::new(),
            down: LinkParams::new(8_000_000, 5.0, 0.0),
            up: LinkParams::new(9600, 5.0, 0.0),
            outages: Vec::new(),
            seed: 0,
        }
    }
}

impl ContactPlan {
    /// `count` passes of `length_s`, one per orbit, the first at `first_start_s`.
    pub fn periodic(mut self, first_start_s: f64, length_s: f64, count: usize) -> Self {
        let period = self.orbit_period_s as f64;
        self.windows = (0..count)
            .map(|i| {
                let start = first_start_s + i as f64 * period;
                Window::new(start, start + length_s)
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, list) in [("window", &self.windows), ("outage", &self.outages)] {
            for w in list.iter() {
                if w.end_s.partial_cmp(&w.start_s) != Some(std::cmp::Ordering::Greater) || w.start_s < 0.0 {
                    return Err(format!("{name} {}..{} must satisfy 0 <= start < end", w.start_s, w.end_s));
                }
            }
        }
        for pair in self.windows.windows(2) {
            if pair[1].start_s < pair[0].end_s {
                return Err(format!(
                    "windows must be sorted and disjoint: {}..{} then {}..{}",
                    pair[0].start_s, pair[0].end_s, pair[1].start_s, pair[1].end_s
                ));
            }
        }
        self.down.validate().map_err(|e| format!("down: {e}"))?;
        self.up.validate().map_err(|e| format!("up: {e}"))?;
        Ok(())
    }

    /// Downlink capacity of one window in bytes.
    pub fn window_capacity(&self, w: &Window) -> f64 {
        w.duration_s() * self.down.rate_bps as f64 / 8.0
    }

    /// Index of the window containing `t_s`, ignoring outages.
    pub fn window_at(&self, t_s: f64) -> Option<usize> {
        self.windows.iter().position(|w| w.contains(t_s))
    }

    /// Every instant at which link availability may change, sorted.
    pub fn edges(&self) -> Vec<f64> {
        let mut edges: Vec<f64> = self
            .windows
            .iter()
            .chain(&self.outages)
            .flat_map(|w| [w.start_s, w.end_s])
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        edges
    }
}

/// True iff `t` falls inside some window and outside every outage.
pub fn link_up(plan: &ContactPlan, t: Duration) -> bool {
    plan.windows.iter().any(|w| w.contains_time(t)) && !plan.outages.iter().any(|o| o.contains_time(t))
}
