use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labelled point cloud of a scene, in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneCloud {
    pub points: Vec<[f64; 3]>,
    pub labels: Vec<u32>,
    /// Label to prompt noun.
    pub names: BTreeMap<u32, String>,
}

impl SceneCloud {
    pub fn new(points: Vec<[f64; 3]>, labels: Vec<u32>, names: BTreeMap<u32, String>) -> Result<Self> {
        let cloud = Self { points, labels, names };
        cloud.validate()?;
        Ok(cloud)
    }

    /// Every point carries label 0 named `name`.
    pub fn single_object(points: Vec<[f64; 3]>, name: &str) -> Self {
        let labels = vec![0; points.len()];
        Self { points, labels, names: BTreeMap::from([(0, name.to_string())]) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::invalid("scene cloud has no points"));
        }
        if self.labels.len() != self.points.len() {
            return Err(Error::invalid("labels and points differ in length"));
        }
        if let Some(l) = self.labels.iter().find(|l| !self.names.contains_key(l)) {
            return Err(Error::invalid(format!("label {l} has no name")));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scene cloud has non-finite coordinates"));
        }
        Ok(())
    }

    pub fn indices_of(&self, label: u32) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == label).map(|(i, _)| i).collect()
    }
}
