use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::objectives::LossBreakdown;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Main,
}

/// Epoch means of the main-step loss terms and of the discriminator's `J_D^els`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub steps: usize,
    pub j_c: f64,
    pub j_d_els: Option<f64>,
    pub j_rplr: Option<f64>,
    pub combined: f64,
    pub critic_j_d_els: Option<f64>,
}

impl EpochLosses {
    pub(crate) fn add(&mut self, lb: &LossBreakdown) {
        let acc = |slot: &mut Option<f64>, v: Option<f64>| {
            if let Some(v) = v {
                *slot = Some(slot.unwrap_or(0.0) + v);
            }
        };
        self.steps += 1;
        self.j_c += lb.j_c;
        self.combined += lb.combined;
        acc(&mut self.j_d_els, lb.j_d_els);
        acc(&mut self.j_rplr, lb.j_rplr);
    }

    pub(crate) fn finish(&mut self) {
        if self.steps == 0 {
            return;
        }
        let n = self.steps as f64;
        self.j_c /= n;
        self.combined /= n;
        for v in [&mut self.j_d_els, &mut self.j_rplr].into_iter().flatten() {
            *v /= n;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoStats {
    pub n: usize,
    /// Records with `w > 0`.
    pub n_valid: usize,
    pub accuracy: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

/// One line of `metrics.jsonl`. Accuracies are on the test split; the
/// average is the unweighted mean over evaluated domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub phase: Phase,
    pub per_domain_acc: BTreeMap<String, f64>,
    pub avg_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_per_domain_acc: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_avg_acc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_acc: Option<f64>,
    pub losses: EpochLosses,
    pub n_pseudo: usize,
    pub n_valid_pseudo: usize,
    pub pseudo_acc: Option<f64>,
    pub valid_pseudo_acc: Option<f64>,
}

impl EpochMetrics {
    pub fn summary(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
        format!(
            "epoch {:>3} {:?} avg {} j_c {:.4} valid pseudo {}/{} (acc {} / {})",
            self.epoch,
            self.phase,
            pct(self.avg_acc),
            self.losses.j_c,
            self.n_valid_pseudo,
            self.n_pseudo,
            pct(self.valid_pseudo_acc),
            pct(self.pseudo_acc)
        )
    }
}

/// Wall-clock seconds per epoch, by phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTiming {
    pub init: Vec<f64>,
    pub main: Vec<f64>,
    pub phi: Vec<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl PhaseTiming {
    /// Mean over all training epochs, both phases.
    pub fn mean_epoch(&self) -> f64 {
        let all: Vec<f64> = self.init.iter().chain(&self.main).copied().collect();
        mean(&all).unwrap_or(0.0)
    }

    /// Tab-separated `phase, epochs, mean seconds` rows.
    pub fn table(&self) -> String {
        let mut s = String::from("phase\tepochs\tmean_seconds\n");
        for (name, v) in [("init", &self.init), ("main", &self.main), ("phi", &self.phi)] {
            let m = mean(v).map_or("-".to_string(), |m| format!("{m:.3}"));
            s.push_str(&format!("{name}\t{}\t{m}\n", v.len()));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RuntimeReport {
    pub san_seconds: f64,
    pub shared_private_seconds: f64,
    /// `san / shared_private`.
    pub ratio: f64,
}

impl RuntimeReport {
    pub fn new(san_seconds: f64, shared_private_seconds: f64) -> Self {
        Self {
            san_seconds,
            shared_private_seconds,
            ratio: san_seconds / shared_private_seconds,
        }
    }
}

impl fmt::Display for RuntimeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode\tmean_epoch_seconds")?;
        writeln!(f, "san\t{:.3}", self.san_seconds)?;
        writeln!(f, "shared_private\t{:.3}", self.shared_private_seconds)?;
        write!(f, "ratio\t{:.3}", self.ratio)
    }
}
