//! Prediction tasks and their class sets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which side of the check-in data a task labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPartition {
    User,
    Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Gender,
    Race,
    Age,
    Category,
}

pub const GENDER_CLASSES: [&str; 2] = ["female", "male"];
pub const RACE_CLASSES: [&str; 3] = ["asian", "white", "african"];
pub const AGE_CLASSES: [&str; 3] = ["15-20", "21-25", "26-36"];
pub const CATEGORY_CLASSES: [&str; 9] = [
    "Entertainment",
    "University",
    "Food",
    "Nightclub",
    "Outdoor",
    "Professional",
    "Residence",
    "Shop",
    "Transportation",
];

impl Task {
    pub const ALL: [Task; 4] = [Task::Gender, Task::Race, Task::Age, Task::Category];
    pub const DEMOGRAPHIC: [Task; 3] = [Task::Gender, Task::Race, Task::Age];

    pub fn classes(self) -> &'static [&'static str] {
        match self {
            Task::Gender => &GENDER_CLASSES,
            Task::Race => &RACE_CLASSES,
            Task::Age => &AGE_CLASSES,
            Task::Category => &CATEGORY_CLASSES,
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().len()
    }

    pub fn target_partition(self) -> TargetPartition {
        match self {
            Task::Category => TargetPartition::Location,
            _ => TargetPartition::User,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Gender => "gender",
            Task::Race => "race",
            Task::Age => "age",
            Task::Category => "category",
        }
    }

    pub fn spec(self) -> TaskSpec {
        TaskSpec::new(self)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gender" => Ok(Task::Gender),
            "race" => Ok(Task::Race),
            "age" => Ok(Task::Age),
            "category" => Ok(Task::Category),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}

/// A task together with its ordered class list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub classes: Vec<String>,
    pub target_partition: TargetPartition,
}

impl TaskSpec {
    pub fn new(task: Task) -> Self {
        TaskSpec {
            task,
            classes: task.classes().iter().map(|c| c.to_string()).collect(),
            target_partition: task.target_partition(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts() {
        assert_eq!(Task::Gender.n_classes(), 2);
        assert_eq!(Task::Race.n_classes(), 3);
        assert_eq!(Task::Age.n_classes(), 3);
        assert_eq!(Task::Category.n_classes(), 9);
        assert_eq!(Task::Category.target_partition(), TargetPartition::Location);
    }

    #[test]
    fn parse_round_trip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert!("height".parse::<Task>().is_err());
    }
}
