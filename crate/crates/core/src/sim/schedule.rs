//! Per-slot user selection rules.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::index::{indices, same_index};
use crate::model::NetworkConfig;

/// How users with equal priority are ordered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum TieBreak {
    /// Ascending class, then ascending user index.
    #[default]
    Deterministic,
    /// Uniformly shuffled with the replication's generator.
    Random,
}

/// Selects users cell group by cell group, where a group lists the
/// `(class, age)` cells that share one priority level.
#[derive(Debug, Clone)]
pub struct GroupedSelector {
    l: usize,
    groups: Vec<Vec<usize>>,
    buckets: Vec<Vec<u32>>,
    spill: Vec<u32>,
}

impl GroupedSelector {
    fn new(l: usize, cells: usize, groups: Vec<Vec<usize>>) -> Self {
        Self {
            l,
            groups,
            buckets: vec![Vec::new(); cells],
            spill: Vec::new(),
        }
    }

    /// Whittle priority: decreasing index value; cells with equal values
    /// (within one class or across classes) form one group.
    pub fn whittle(cfg: &NetworkConfig) -> Self {
        let l = cfg.l;
        let w: Vec<f64> = cfg.classes.iter().flat_map(|c| indices(c.p, l)).collect();
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for cell in order {
            match groups.last_mut() {
                Some(g) if same_index(w[g[0]], w[cell]) => g.push(cell),
                _ => groups.push(vec![cell]),
            }
        }
        Self::new(l, w.len(), groups)
    }

    /// Oldest first; all classes at one age form one group.
    pub fn greedy_max_age(cfg: &NetworkConfig) -> Self {
        let l = cfg.l;
        let k = cfg.num_classes();
        let groups = (1..=l)
            .rev()
            .map(|age| (0..k).map(|c| c * l + age - 1).collect())
            .collect();
        Self::new(l, k * l, groups)
    }

    /// Appends the selected users to `out` (cleared first).
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        ages: &[u32],
        class_of: &[usize],
        budget: usize,
        tie: TieBreak,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) {
        out.clear();
        for b in self.buckets.iter_mut() {
            b.clear();
        }
        for (u, (&age, &k)) in ages.iter().zip(class_of).enumerate() {
            self.buckets[k * self.l + age as usize - 1].push(u as u32);
        }
        for group in &self.groups {
            let room = budget - out.len();
            if room == 0 {
                break;
            }
            let size: usize = group.iter().map(|&c| self.buckets[c].len()).sum();
            if size <= room {
                for &c in group {
                    out.extend(self.buckets[c].iter().map(|&u| u as usize));
                }
                continue;
            }
            self.spill.clear();
            for &c in group {
                self.spill.extend_from_slice(&self.buckets[c]);
            }
            match tie {
                TieBreak::Deterministic => {
                    // Users are numbered class by class, so this is (class, user) order.
                    self.spill.sort_unstable();
                }
                TieBreak::Random => self.spill.shuffle(rng),
            }
            out.extend(self.spill[..room].iter().map(|&u| u as usize));
            break;
        }
    }
}

/// Whittle selection for one state (users numbered class by class).
pub fn whittle_schedule(ages: &[u32], cfg: &NetworkConfig) -> Vec<usize> {
    let class_of = class_of_users(cfg);
    let mut selector = GroupedSelector::whittle(cfg);
    let mut out = Vec::with_capacity(cfg.scheduled_users());
    // Never drawn from with the deterministic tie-break.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    selector.select(
        ages,
        &class_of,
        cfg.scheduled_users(),
        TieBreak::Deterministic,
        &mut unused,
        &mut out,
    );
    out
}

/// Class of every user when users are numbered class by class.
pub fn class_of_users(cfg: &NetworkConfig) -> Vec<usize> {
    cfg.class_sizes()
        .iter()
        .enumerate()
        .flat_map(|(k, &size)| std::iter::repeat_n(k, size))
        .collect()
}
