use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Audio, Modality::Video, Modality::Text];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
            Modality::Text => "text",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per modality, indexable by [`Modality`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityMap<T>(pub [T; 3]);

impl<T> ModalityMap<T> {
    pub fn from_fn(mut f: impl FnMut(Modality) -> T) -> Self {
        ModalityMap(Modality::ALL.map(&mut f))
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(Modality) -> Result<T, E>) -> Result<Self, E> {
        let [a, v, t] = Modality::ALL;
        Ok(ModalityMap([f(a)?, f(v)?, f(t)?]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (Modality, &T)> {
        Modality::ALL.into_iter().zip(self.0.iter())
    }

    pub fn map<U>(&self, mut f: impl FnMut(Modality, &T) -> U) -> ModalityMap<U> {
        ModalityMap::from_fn(|m| f(m, &self[m]))
    }
}

impl<T> Index<Modality> for ModalityMap<T> {
    type Output = T;

    fn index(&self, m: Modality) -> &T {
        &self.0[m.index()]
    }
}

impl<T> IndexMut<Modality> for ModalityMap<T> {
    fn index_mut(&mut self, m: Modality) -> &mut T {
        &mut self.0[m.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Emotion,
    Intent,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Emotion, Task::Intent];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Emotion => "emotion",
            Task::Intent => "intent",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Augmented,
}
