use serde::{Deserialize, Serialize};

use crate::scenegen::{Scene, Split};

use super::protocol::EvalInstance;

/// Which instances of a scene become evaluation targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceSelection {
    #[default]
    All,
    /// The designated instance of overlap and same-depth scenes; every
    /// instance of plain scenes.
    Focus,
}

impl std::str::FromStr for InstanceSelection {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "all" => Ok(Self::All),
            "focus" => Ok(Self::Focus),
            _ => Err(crate::Error::Config(format!("unknown instance selection {s:?}"))),
        }
    }
}

/// Evaluation targets, optionally restricted to one split. Ids are
/// `scene<index>/<instance>`.
pub fn eval_instances<'a>(scenes: &'a [Scene], split: Option<Split>, selection: InstanceSelection) -> Vec<EvalInstance<'a>> {
    let mut out = Vec::new();
    for (i, s) in scenes.iter().enumerate() {
        if split.is_some_and(|sp| sp != s.split) {
            continue;
        }
        let targets: Vec<usize> = match (selection, s.focus) {
            (InstanceSelection::Focus, Some(f)) => vec![f],
            _ => (0..s.masks.len()).collect(),
        };
        for k in targets {
            out.push(EvalInstance { id: format!("scene{i:05}/{k}"), image: &s.image, depth: &s.depth, gt: &s.masks[k] });
        }
    }
    out
}
