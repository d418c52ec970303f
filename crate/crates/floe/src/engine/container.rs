//! Logical containers with fixed core budgets, and best-fit-decreasing
//! placement of flakes into them.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PlacementError {
    #[error("total container capacity {capacity} is below the flake count {flakes}")]
    InsufficientCores { capacity: u32, flakes: u32 },
    #[error("no container can host {pellet} (needs {cores} cores)")]
    Infeasible { pellet: String, cores: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub id: usize,
    pub total_cores: u32,
    pub allocated: BTreeMap<String, u32>,
}

impl Container {
    pub fn new(id: usize, total_cores: u32) -> Self {
        Container {
            id,
            total_cores,
            allocated: BTreeMap::new(),
        }
    }

    pub fn used(&self) -> u32 {
        self.allocated.values().sum()
    }

    pub fn free(&self) -> u32 {
        self.total_cores - self.used()
    }
}

/// Place flakes into containers by best-fit decreasing: largest request
/// first (ties by id), each into the container with the least free capacity
/// that still fits (ties by lowest container index).
pub fn place(
    requests: &[(String, u32)],
    capacities: &[u32],
) -> Result<Vec<Container>, PlacementError> {
    let capacity: u32 = capacities.iter().sum();
    if capacity < requests.len() as u32 {
        return Err(PlacementError::InsufficientCores {
            capacity,
            flakes: requests.len() as u32,
        });
    }
    let mut containers: Vec<Container> = capacities
        .iter()
        .enumerate()
        .map(|(id, &c)| Container::new(id, c))
        .collect();

    let mut order: Vec<&(String, u32)> = requests.iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

    for (pellet, cores) in order {
        let best = containers
            .iter_mut()
            .filter(|c| c.free() >= *cores)
            .min_by_key(|c| (c.free(), c.id));
        match best {
            Some(c) => {
                c.allocated.insert(pellet.clone(), *cores);
            }
            None => {
                return Err(PlacementError::Infeasible {
                    pellet: pellet.clone(),
                    cores: *cores,
                })
            }
        }
    }
    Ok(containers)
}
