//! Scenario configuration: a TOML file whose keys mirror the experiment
//! parameter names, plus an `[attack]` table.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::consensus::QuorumPolicy;
use crate::error::{Error, Result};
use crate::validation::ValidationParams;
use crate::world::MobilityKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_s: u64,
    pub num_vehicles: usize,
    pub num_rsus: usize,
    pub mobility: MobilityKind,
    /// Width and height of the simulated area, meters.
    pub area_m: [f64; 2],
    pub grid_spacing_m: f64,
    pub min_speed_kmh: f64,
    pub max_speed_kmh: f64,
    pub range_m: f64,
    pub probe_interval_s: u64,
    pub blocksize: usize,
    pub blocktime_s: u64,
    pub fault_tolerance: usize,
    pub quorum_policy: QuorumPolicy,
    pub n_prev_blocks: usize,
    pub threshold: f64,
    pub variance_weight: f64,
    pub tolerable_lost_conflicts: u32,
    pub max_reputation: u64,
    pub initial_reputation: u64,
    /// Reputation the road-side units start with in the genesis block.
    pub genesis_reputation: u64,
    pub base_reward: u64,
    pub base_penalty: u64,
    pub inactivity_decay: u64,
    pub neighbor_history_blocks: usize,
    pub conflict_distance_m: f64,
    pub conflict_window_s: u64,
    pub attack: AttackConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ScenarioConfig {
    /// 100 vehicles and 8 RSUs for one simulated hour.
    pub fn desk() -> Self {
        ScenarioConfig {
            seed: 1,
            duration_s: 3600,
            num_vehicles: 100,
            num_rsus: 8,
            mobility: MobilityKind::RandomWaypoint,
            area_m: [400.0, 400.0],
            grid_spacing_m: 50.0,
            min_speed_kmh: 10.0,
            max_speed_kmh: 130.0,
            range_m: 15.0,
            probe_interval_s: 10,
            blocksize: 2000,
            blocktime_s: 60,
            fault_tolerance: 2,
            quorum_policy: QuorumPolicy::TwoFPlusOne,
            n_prev_blocks: 3,
            threshold: 0.1,
            variance_weight: 0.67,
            tolerable_lost_conflicts: 2,
            max_reputation: 4096,
            initial_reputation: 64,
            genesis_reputation: 64,
            base_reward: 256,
            base_penalty: 512,
            inactivity_decay: 64,
            neighbor_history_blocks: 3,
            conflict_distance_m: 15.0,
            conflict_window_s: 0,
            attack: AttackConfig::default(),
        }
    }

    /// Full experiment sizes: 1,500 vehicles, 40 RSUs, 50,000-transaction
    /// blocks and f = 6.
    pub fn paper_scale() -> Self {
        ScenarioConfig {
            num_vehicles: 1500,
            num_rsus: 40,
            area_m: [1550.0, 1550.0],
            blocksize: 50_000,
            fault_tolerance: 6,
            ..Self::desk()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with_base(text, &Self::desk())
    }

    /// Parses `text` as overrides on top of `base`.
    pub fn from_toml_with_base(text: &str, base: &ScenarioConfig) -> Result<Self> {
        let overrides: toml::Table = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let mut root = toml::Value::try_from(base).expect("config serializes");
        merge(&mut root, toml::Value::Table(overrides));
        let config: ScenarioConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Reads a TOML scenario, or the `config` member of a run manifest when
    /// the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_base(path, &Self::desk())
    }

    /// Like [`load`](Self::load) but TOML keys override `base` instead of
    /// the desk profile. Manifests are always taken verbatim.
    pub fn load_with_base(path: &Path, base: &ScenarioConfig) -> Result<Self> {
        // an unreadable scenario file is a configuration problem, not a run failure
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Wrapper {
                config: ScenarioConfig,
            }
            let w: Wrapper = serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            w.config.check()?;
            return Ok(w.config);
        }
        Self::from_toml_with_base(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn check(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive")))
            }
        };
        positive(self.area_m[0], "area_m")?;
        positive(self.area_m[1], "area_m")?;
        positive(self.min_speed_kmh, "min_speed_kmh")?;
        positive(self.max_speed_kmh, "max_speed_kmh")?;
        positive(self.range_m, "range_m")?;
        positive(self.grid_spacing_m, "grid_spacing_m")?;
        if self.min_speed_kmh > self.max_speed_kmh {
            return Err(Error::config("min_speed_kmh exceeds max_speed_kmh"));
        }
        if self.blocktime_s == 0 || self.probe_interval_s == 0 {
            return Err(Error::config("blocktime_s and probe_interval_s must be positive"));
        }
        if self.blocksize == 0 {
            return Err(Error::config("blocksize must be positive"));
        }
        if self.num_rsus < 2 {
            return Err(Error::config("at least two RSUs are needed for the genesis block"));
        }
        if self.genesis_reputation == 0 {
            return Err(Error::config("genesis_reputation must be positive"));
        }
        if self.attack.attacker_count(self.num_vehicles) > self.num_vehicles {
            return Err(Error::config("more attackers than vehicles"));
        }
        self.validation_params().check()?;
        self.attack.check()
    }

    pub fn validation_params(&self) -> ValidationParams {
        ValidationParams {
            n_prev_blocks: self.n_prev_blocks,
            threshold: self.threshold,
            v_max: self.max_speed_kmh / 3.6,
            range_max: self.range_m,
            variance_weight: self.variance_weight,
            tolerable_lost_conflicts: self.tolerable_lost_conflicts,
            base_reward: self.base_reward,
            base_penalty: self.base_penalty,
            initial_reputation: self.initial_reputation,
            max_reputation: self.max_reputation,
            neighbor_history_blocks: self.neighbor_history_blocks,
            conflict_distance: self.conflict_distance_m,
            conflict_window_ms: self.conflict_window_s * 1000,
            inactivity_decay: self.inactivity_decay,
        }
    }

    pub fn block_time(&self) -> Duration {
        Duration::from_secs(self.blocktime_s)
    }

    /// Overrides one key, addressed with dots for nested tables
    /// (`threshold`, `attack.fraction`). The value is parsed as a TOML
    /// literal, falling back to a bare string.
    pub fn set_param(&mut self, key: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).expect("config serializes");
        let parsed = parse_literal(value);
        let mut slot = &mut root;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot
                .as_table_mut()
                .ok_or_else(|| Error::config(format!("unknown parameter {key}")))?;
            if !table.contains_key(*part) {
                // optional fields are omitted when unset
                let known = i + 1 == parts.len() && parts[..i] == ["attack"] && *part == "attacker_indices";
                if !known {
                    return Err(Error::config(format!("unknown parameter {key}")));
                }
                table.insert(part.to_string(), toml::Value::Array(Vec::new()));
            }
            slot = table.get_mut(*part).expect("checked");
        }
        *slot = parsed;
        let updated: ScenarioConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(format!("{key} = {value}: {}", e.message())))?;
        updated.check()?;
        *self = updated;
        Ok(())
    }
}

fn merge(into: &mut toml::Value, from: toml::Value) {
    match (into, from) {
        (toml::Value::Table(a), toml::Value::Table(b)) => {
            for (k, v) in b {
                match a.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        a.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn parse_literal(value: &str) -> toml::Value {
    #[derive(Deserialize)]
    struct Probe {
        v: toml::Value,
    }
    match toml::from_str::<Probe>(&format!("v = {value}")) {
        Ok(p) => p.v,
        Err(_) => toml::Value::String(value.to_string()),
    }
}
