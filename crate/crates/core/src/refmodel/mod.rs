//! Desk-scale SEIR agent-based model with building contamination.
//!
//! Agents commute between a home and a workplace building. Infectious agents
//! (presymptomatic, asymptomatic, symptomatic) shed viral load into the
//! building they occupy; susceptible occupants are infected with probability
//! linear in the accumulated load, and also by direct contact with infectious
//! co-occupants. Building load decays by a constant fraction every hour.
//!
//! Randomness comes from a single ChaCha8 stream seeded from the task seed.
//! Within an hour, draws are consumed sub-phase by sub-phase in agent-id
//! order:
//!
//! 1. environmental infection: one draw per susceptible agent;
//! 2. direct infection: one draw per agent still susceptible;
//! 3. progression: one draw per agent reaching a branching transition.
//!
//! Draws are taken even when the probability is zero, so the stream layout
//! depends only on the status vector.

mod trajectory;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use trajectory::{
    parse_trajectory_csv, read_trajectory, task_id_from_file_name, trajectory_file_name, Indicator,
    Row, Trajectory, TRAJECTORY_HEADER,
};

use crate::error::{Error, Result};
use crate::scalar::{Assignment, Scalar};

/// Hours `[start, end)` spent at the workplace.
pub const WORK_HOURS: std::ops::Range<u64> = 8..17;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpidemicParams {
    /// Load shed per infectious agent per hour.
    pub basic_viral_release: f64,
    /// Fraction of building load lost per hour.
    pub basic_viral_decrease: f64,
    /// Per infectious co-occupant per hour.
    pub direct_transmission_prob: f64,
    /// Slope of the load → infection probability map.
    pub env_infection_factor: f64,
    pub population: u32,
    pub n_buildings: u32,
    pub initial_infected: u32,
    pub latent_hours: u32,
    pub presymptomatic_hours: u32,
    pub infectious_hours: u32,
    pub hospital_hours: u32,
    pub icu_hours: u32,
    pub p_asymptomatic: f64,
    pub p_hospitalize: f64,
    pub p_icu: f64,
    pub p_die: f64,
}

impl Default for EpidemicParams {
    fn default() -> Self {
        EpidemicParams {
            basic_viral_release: 0.05,
            basic_viral_decrease: 0.1,
            direct_transmission_prob: 0.05,
            env_infection_factor: 0.5,
            population: 500,
            n_buildings: 50,
            initial_infected: 5,
            latent_hours: 48,
            presymptomatic_hours: 24,
            infectious_hours: 168,
            hospital_hours: 120,
            icu_hours: 120,
            p_asymptomatic: 0.3,
            p_hospitalize: 0.2,
            p_icu: 0.3,
            p_die: 0.5,
        }
    }
}

impl EpidemicParams {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(name, format!("{v} is not in [0, 1]")))
            }
        };
        unit("basic_viral_decrease", self.basic_viral_decrease)?;
        unit("direct_transmission_prob", self.direct_transmission_prob)?;
        unit("p_asymptomatic", self.p_asymptomatic)?;
        unit("p_hospitalize", self.p_hospitalize)?;
        unit("p_icu", self.p_icu)?;
        unit("p_die", self.p_die)?;
        for (name, v) in [
            ("basic_viral_release", self.basic_viral_release),
            ("env_infection_factor", self.env_infection_factor),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(name, format!("{v} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("population", self.population),
            ("n_buildings", self.n_buildings),
            ("latent_hours", self.latent_hours),
            ("presymptomatic_hours", self.presymptomatic_hours),
            ("infectious_hours", self.infectious_hours),
            ("hospital_hours", self.hospital_hours),
            ("icu_hours", self.icu_hours),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        if self.initial_infected > self.population {
            return Err(Error::config("initial_infected", "exceeds population"));
        }
        Ok(())
    }

    /// Overrides one field by its parameter name.
    pub fn set(&mut self, name: &str, value: &Scalar) -> Result<()> {
        let real = || {
            value
                .as_f64()
                .ok_or_else(|| Error::config(name, format!("expected a number, got `{value}`")))
        };
        let count = || {
            value
                .as_i64()
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| Error::config(name, format!("expected a count, got `{value}`")))
        };
        match name {
            "basic_viral_release" => self.basic_viral_release = real()?,
            "basic_viral_decrease" => self.basic_viral_decrease = real()?,
            "direct_transmission_prob" => self.direct_transmission_prob = real()?,
            "env_infection_factor" => self.env_infection_factor = real()?,
            "p_asymptomatic" => self.p_asymptomatic = real()?,
            "p_hospitalize" => self.p_hospitalize = real()?,
            "p_icu" => self.p_icu = real()?,
            "p_die" => self.p_die = real()?,
            "population" => self.population = count()?,
            "n_buildings" => self.n_buildings = count()?,
            "initial_infected" => self.initial_infected = count()?,
            "latent_hours" => self.latent_hours = count()?,
            "presymptomatic_hours" => self.presymptomatic_hours = count()?,
            "infectious_hours" => self.infectious_hours = count()?,
            "hospital_hours" => self.hospital_hours = count()?,
            "icu_hours" => self.icu_hours = count()?,
            _ => return Err(Error::config(name, "unknown model parameter")),
        }
        Ok(())
    }

    /// Copy of `self` with every assigned parameter applied, validated.
    pub fn with_assignment(&self, assignment: &Assignment) -> Result<EpidemicParams> {
        let mut out = self.clone();
        for (name, value) in assignment.iter() {
            out.set(name, value)?;
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Susceptible,
    Latent,
    Presymptomatic,
    Asymptomatic,
    Symptomatic,
    Hospitalized,
    Icu,
    Recovered,
    Dead,
}

impl Status {
    pub const ALL: [Status; 9] = [
        Status::Susceptible,
        Status::Latent,
        Status::Presymptomatic,
        Status::Asymptomatic,
        Status::Symptomatic,
        Status::Hospitalized,
        Status::Icu,
        Status::Recovered,
        Status::Dead,
    ];

    pub fn is_infectious(self) -> bool {
        matches!(
            self,
            Status::Presymptomatic | Status::Asymptomatic | Status::Symptomatic
        )
    }

    /// Infected and not yet resolved.
    pub fn is_active(self) -> bool {
        !matches!(self, Status::Susceptible | Status::Recovered | Status::Dead)
    }

    /// Hospital patients and the dead stay out of buildings.
    pub fn is_mobile(self) -> bool {
        !matches!(self, Status::Hospitalized | Status::Icu | Status::Dead)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub status: Status,
    pub stage_hours_left: u32,
    pub home: u32,
    pub workplace: u32,
}

impl Agent {
    fn building_at(&self, hour_of_day: u64) -> usize {
        if WORK_HOURS.contains(&hour_of_day) {
            self.workplace as usize
        } else {
            self.home as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    params: EpidemicParams,
    agents: Vec<Agent>,
    loads: Vec<f64>,
    hour: u64,
    rng: ChaCha8Rng,
    infectious_here: Vec<u32>,
}

impl World {
    /// Seeded world: homes and workplaces drawn uniformly in agent order,
    /// then `initial_infected` distinct agents set Latent.
    pub fn new(params: EpidemicParams, seed: u64) -> Result<World> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nb = params.n_buildings;
        let mut agents: Vec<Agent> = (0..params.population)
            .map(|_| {
                let home = rng.gen_range(0..nb);
                let workplace = rng.gen_range(0..nb);
                Agent {
                    status: Status::Susceptible,
                    stage_hours_left: 0,
                    home,
                    workplace,
                }
            })
            .collect();
        let seeded = rand::seq::index::sample(
            &mut rng,
            params.population as usize,
            params.initial_infected as usize,
        );
        for i in seeded.iter() {
            agents[i].status = Status::Latent;
            agents[i].stage_hours_left = params.latent_hours;
        }
        Ok(World {
            loads: vec![0.0; nb as usize],
            infectious_here: vec![0; nb as usize],
            params,
            agents,
            hour: 0,
            rng,
        })
    }

    pub fn params(&self) -> &EpidemicParams {
        &self.params
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn building_loads(&self) -> &[f64] {
        &self.loads
    }

    pub fn set_building_load(&mut self, building: usize, load: f64) {
        self.loads[building] = load;
    }

    /// Hours elapsed.
    pub fn hour(&self) -> u64 {
        self.hour
    }

    /// Agent count per status, indexed like [`Status::ALL`].
    pub fn status_counts(&self) -> [u64; 9] {
        let mut counts = [0u64; 9];
        for a in &self.agents {
            counts[a.status as usize] += 1;
        }
        counts
    }

    pub fn is_extinct(&self) -> bool {
        !self.agents.iter().any(|a| a.status.is_active())
    }

    pub fn indicators(&self, step: u64) -> Row {
        let c = self.status_counts();
        let at = |s: Status| c[s as usize];
        Row {
            step,
            values: [
                at(Status::Susceptible),
                at(Status::Recovered),
                at(Status::Presymptomatic),
                at(Status::Asymptomatic),
                at(Status::Symptomatic),
                at(Status::Hospitalized),
                at(Status::Icu),
                at(Status::Dead),
            ],
        }
    }

    /// Advances the world by one hour.
    pub fn step_hour(&mut self) {
        let hour_of_day = self.hour % 24;
        let p = &self.params;

        // mobility + release
        self.infectious_here.iter_mut().for_each(|c| *c = 0);
        for agent in &self.agents {
            if agent.status.is_infectious() {
                let b = agent.building_at(hour_of_day);
                self.loads[b] += p.basic_viral_release;
                self.infectious_here[b] += 1;
            }
        }

        // environmental infection
        for agent in &mut self.agents {
            if agent.status == Status::Susceptible {
                let load = self.loads[agent.building_at(hour_of_day)];
                let prob = (p.env_infection_factor * load).min(1.0);
                if self.rng.gen::<f64>() < prob {
                    agent.status = Status::Latent;
                    agent.stage_hours_left = p.latent_hours;
                }
            }
        }

        // direct infection
        let escape = 1.0 - p.direct_transmission_prob;
        for agent in &mut self.agents {
            if agent.status == Status::Susceptible {
                let k = self.infectious_here[agent.building_at(hour_of_day)];
                let prob = 1.0 - escape.powi(k as i32);
                if self.rng.gen::<f64>() < prob {
                    agent.status = Status::Latent;
                    agent.stage_hours_left = p.latent_hours;
                }
            }
        }

        // decay
        let keep = 1.0 - p.basic_viral_decrease;
        self.loads.iter_mut().for_each(|l| *l *= keep);

        // progression
        for agent in &mut self.agents {
            if !agent.status.is_active() {
                continue;
            }
            agent.stage_hours_left -= 1;
            if agent.stage_hours_left > 0 {
                continue;
            }
            let rng = &mut self.rng;
            let (next, hours) = match agent.status {
                Status::Latent => (Status::Presymptomatic, p.presymptomatic_hours),
                Status::Presymptomatic => {
                    if rng.gen::<f64>() < p.p_asymptomatic {
                        (Status::Asymptomatic, p.infectious_hours)
                    } else {
                        (Status::Symptomatic, p.infectious_hours)
                    }
                }
                Status::Asymptomatic => (Status::Recovered, 0),
                Status::Symptomatic => {
                    if rng.gen::<f64>() < p.p_hospitalize {
                        (Status::Hospitalized, p.hospital_hours)
                    } else {
                        (Status::Recovered, 0)
                    }
                }
                Status::Hospitalized => {
                    if rng.gen::<f64>() < p.p_icu {
                        (Status::Icu, p.icu_hours)
                    } else {
                        (Status::Recovered, 0)
                    }
                }
                Status::Icu => {
                    if rng.gen::<f64>() < p.p_die {
                        (Status::Dead, 0)
                    } else {
                        (Status::Recovered, 0)
                    }
                }
                Status::Susceptible | Status::Recovered | Status::Dead => unreachable!(),
            };
            agent.status = next;
            agent.stage_hours_left = hours;
        }

        self.hour += 1;
    }
}

/// Runs `final_step` hours, recording indicators after each one. With
/// `stop_on_extinction`, stops after the first hour with no active infection.
pub fn run_simulation(
    params: &EpidemicParams,
    seed: u64,
    final_step: u64,
    stop_on_extinction: bool,
) -> Result<Trajectory> {
    if final_step == 0 {
        return Err(Error::config("finalStep", "must be >= 1"));
    }
    let mut world = World::new(params.clone(), seed)?;
    let mut rows = Vec::with_capacity(final_step as usize);
    for step in 0..final_step {
        world.step_hour();
        rows.push(world.indicators(step));
        if stop_on_extinction && world.is_extinct() {
            break;
        }
    }
    Ok(Trajectory { task_id: 0, rows })
}
