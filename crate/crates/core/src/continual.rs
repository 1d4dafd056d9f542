//! Task sequences, client scenarios and exemplar memory.
//!
//! A client owns an ordered list of tasks; each task is a set of classes
//! disjoint from every other task in the sequence plus a round budget, and
//! the budgets partition the experiment's communication rounds into
//! consecutive windows. Exemplar memory keeps a small random sample per
//! learnt task which can be replayed alongside fresh data.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Example};
use crate::error::{Error, Result};
use crate::nn::NUM_CLASSES;

pub const DEFAULT_EXEMPLARS_PER_TASK: usize = 10;

/// One task: a class set and the number of rounds spent on it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    /// 1-based position in the sequence.
    pub task_id: usize,
    pub classes: BTreeSet<usize>,
    pub round_budget: usize,
}

/// A client's ordered private tasks. Class sets are pairwise disjoint and
/// the round budgets sum to the experiment's total round count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSequence {
    tasks: Vec<TaskSpec>,
}

impl TaskSequence {
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Config("a task sequence needs at least one task".into()));
        }
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        for (i, t) in tasks.iter().enumerate() {
            if t.task_id != i + 1 {
                return Err(Error::Config(format!(
                    "task ids must run 1..n in order, found {} at position {i}",
                    t.task_id
                )));
            }
            if t.classes.is_empty() {
                return Err(Error::Config(format!("task {} has no classes", t.task_id)));
            }
            if t.round_budget == 0 {
                return Err(Error::Config(format!(
                    "task {} has a zero round budget",
                    t.task_id
                )));
            }
            if let Some(&c) = t.classes.iter().find(|c| !seen.insert(**c)) {
                return Err(Error::Config(format!(
                    "class {c} appears in more than one task"
                )));
            }
            if let Some(&c) = t.classes.iter().find(|&&c| c >= NUM_CLASSES) {
                return Err(Error::Config(format!(
                    "class {c} outside 0..{NUM_CLASSES}"
                )));
            }
        }
        Ok(TaskSequence { tasks })
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn total_rounds(&self) -> usize {
        self.tasks.iter().map(|t| t.round_budget).sum()
    }

    /// The task whose cumulative round window contains round `r` (1-based).
    pub fn current_task(&self, round: usize) -> Result<&TaskSpec> {
        let total = self.total_rounds();
        if round == 0 || round > total {
            return Err(Error::RejectedInput(format!(
                "round {round} outside 1..={total}"
            )));
        }
        let mut consumed = 0;
        for t in &self.tasks {
            consumed += t.round_budget;
            if round <= consumed {
                return Ok(t);
            }
        }
        unreachable!("budgets cover every round in range");
    }

    /// Inclusive round window `(first, last)` of a task.
    pub fn window(&self, task_id: usize) -> Result<(usize, usize)> {
        if task_id == 0 || task_id > self.tasks.len() {
            return Err(Error::RejectedInput(format!(
                "task {task_id} outside 1..={}",
                self.tasks.len()
            )));
        }
        let mut start = 1;
        for t in &self.tasks {
            let end = start + t.round_budget - 1;
            if t.task_id == task_id {
                return Ok((start, end));
            }
            start = end + 1;
        }
        unreachable!();
    }

    /// Union of the classes of every task learnt by round `r` (inclusive).
    pub fn cumulative_classes(&self, round: usize) -> Result<BTreeSet<usize>> {
        let current = self.current_task(round)?.task_id;
        Ok(self
            .tasks
            .iter()
            .filter(|t| t.task_id <= current)
            .flat_map(|t| t.classes.iter().cloned())
            .collect())
    }
}

/// The observed client's two-task walk: "Walking Up" (class 1) for the first
/// half of the rounds, then "Walking Down" (class 2).
pub fn scenario_client1(total_rounds: usize) -> Result<TaskSequence> {
    if total_rounds == 0 || total_rounds % 2 != 0 {
        return Err(Error::Config(format!(
            "the two-task scenario needs an even positive round count, got {total_rounds}"
        )));
    }
    TaskSequence::new(vec![
        TaskSpec {
            task_id: 1,
            classes: BTreeSet::from([1]),
            round_budget: total_rounds / 2,
        },
        TaskSpec {
            task_id: 2,
            classes: BTreeSet::from([2]),
            round_budget: total_rounds / 2,
        },
    ])
}

/// The generalized client: one task over all six classes for every round.
pub fn scenario_generalized(total_rounds: usize) -> Result<TaskSequence> {
    if total_rounds == 0 {
        return Err(Error::Config(
            "the generalized scenario needs at least one round".into(),
        ));
    }
    TaskSequence::new(vec![TaskSpec {
        task_id: 1,
        classes: (0..NUM_CLASSES).collect(),
        round_budget: total_rounds,
    }])
}

/// Per-task memory of up to `capacity_per_task` randomly sampled examples.
#[derive(Debug, Clone, Default)]
pub struct ExemplarStore {
    capacity_per_task: usize,
    slots: BTreeMap<usize, Vec<Example>>,
}

impl ExemplarStore {
    pub fn new(capacity_per_task: usize) -> Self {
        ExemplarStore {
            capacity_per_task,
            slots: BTreeMap::new(),
        }
    }

    pub fn capacity_per_task(&self) -> usize {
        self.capacity_per_task
    }

    /// Store a fresh random sample for `task_id`. A new task gets its own
    /// slot; a known task has its slot replaced wholesale. Other slots are
    /// untouched.
    pub fn update(&mut self, task_id: usize, examples: &Dataset, rng: &mut ChaCha8Rng) {
        let n = examples.len().min(self.capacity_per_task);
        let picks = rand::seq::index::sample(rng, examples.len(), n);
        let sample: Vec<Example> = picks.into_iter().map(|i| examples.get(i).clone()).collect();
        self.slots.insert(task_id, sample);
    }

    pub fn stored(&self, task_id: usize) -> Option<&[Example]> {
        self.slots.get(&task_id).map(|v| v.as_slice())
    }

    pub fn seen_tasks(&self) -> usize {
        self.slots.len()
    }

    pub fn total_stored(&self) -> usize {
        self.slots.values().map(|v| v.len()).sum()
    }

    /// Exemplars of every task except `current_task`, in task order.
    pub fn replay_excluding(&self, current_task: usize) -> Vec<Example> {
        self.slots
            .iter()
            .filter(|(&id, _)| id != current_task)
            .flat_map(|(_, v)| v.iter().cloned())
            .collect()
    }
}

/// The dataset a client trains on this round: the fresh draw plus, when
/// replay is enabled, the stored exemplars of previously learnt tasks (the
/// current task's slot is excluded).
pub fn compose_round_dataset(
    fresh: &Dataset,
    store: &ExemplarStore,
    current_task: usize,
    use_exemplars: bool,
) -> Result<Dataset> {
    if fresh.is_empty() {
        return Err(Error::RejectedInput("fresh round data is empty".into()));
    }
    if !use_exemplars {
        return Ok(fresh.clone());
    }
    let mut examples = fresh.examples().to_vec();
    examples.extend(store.replay_excluding(current_task));
    Ok(Dataset::new(examples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use crate::seeding;

    #[test]
    fn client1_scenario_budgets() {
        let seq = scenario_client1(8).unwrap();
        assert_eq!(seq.num_tasks(), 2);
        assert_eq!(seq.tasks()[0].round_budget, 4);
        assert_eq!(seq.tasks()[1].round_budget, 4);
        assert_eq!(seq.tasks()[0].classes, BTreeSet::from([1]));
        assert_eq!(seq.tasks()[1].classes, BTreeSet::from([2]));

        let tiny = scenario_client1(2).unwrap();
        assert_eq!(tiny.tasks()[0].round_budget, 1);
        assert_eq!(tiny.tasks()[1].round_budget, 1);
    }

    #[test]
    fn client1_scenario_rejects_odd_rounds() {
        assert!(scenario_client1(7).is_err());
        assert!(scenario_client1(0).is_err());
    }

    #[test]
    fn generalized_scenario_single_task_all_classes() {
        let seq = scenario_generalized(8).unwrap();
        assert_eq!(seq.num_tasks(), 1);
        assert_eq!(seq.tasks()[0].round_budget, 8);
        assert_eq!(seq.tasks()[0].classes.len(), NUM_CLASSES);
    }

    #[test]
    fn current_task_boundaries() {
        let seq = scenario_client1(8).unwrap();
        assert_eq!(seq.current_task(4).unwrap().task_id, 1);
        assert_eq!(seq.current_task(5).unwrap().task_id, 2);
        assert!(seq.current_task(0).is_err());
        assert!(seq.current_task(9).is_err());

        let single = scenario_generalized(8).unwrap();
        for r in 1..=8 {
            assert_eq!(single.current_task(r).unwrap().task_id, 1);
        }
    }

    #[test]
    fn windows_partition_the_rounds() {
        let seq = scenario_client1(8).unwrap();
        assert_eq!(seq.window(1).unwrap(), (1, 4));
        assert_eq!(seq.window(2).unwrap(), (5, 8));

        let mut covered = Vec::new();
        for t in 1..=seq.num_tasks() {
            let (a, b) = seq.window(t).unwrap();
            covered.extend(a..=b);
        }
        assert_eq!(covered, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn cumulative_classes_grow_at_the_boundary() {
        let seq = scenario_client1(8).unwrap();
        for r in 1..=4 {
            assert_eq!(seq.cumulative_classes(r).unwrap(), BTreeSet::from([1]));
        }
        for r in 5..=8 {
            assert_eq!(seq.cumulative_classes(r).unwrap(), BTreeSet::from([1, 2]));
        }
    }

    #[test]
    fn sequence_rejects_overlapping_classes() {
        let result = TaskSequence::new(vec![
            TaskSpec {
                task_id: 1,
                classes: BTreeSet::from([1, 2]),
                round_budget: 2,
            },
            TaskSpec {
                task_id: 2,
                classes: BTreeSet::from([2, 3]),
                round_budget: 2,
            },
        ]);
        assert!(result.is_err());
    }

    fn round_data(n: usize) -> Dataset {
        let pool = make_synthetic(50, n);
        Dataset::new(
            pool.examples()
                .iter()
                .filter(|e| e.label == 1)
                .cloned()
                .collect(),
        )
    }

    #[test]
    fn exemplar_update_saves_and_refreshes() {
        let data = round_data(120);
        let mut store = ExemplarStore::new(10);
        let mut rng = seeding::rng_for(1, &[seeding::purpose::EXEMPLAR, 1, 1]);

        store.update(1, &data, &mut rng);
        assert_eq!(store.stored(1).unwrap().len(), 10);
        let first: Vec<u64> = store.stored(1).unwrap().iter().map(|e| e.source_index).collect();

        store.update(1, &data, &mut rng);
        assert_eq!(store.stored(1).unwrap().len(), 10);
        let second: Vec<u64> = store.stored(1).unwrap().iter().map(|e| e.source_index).collect();
        assert_ne!(first, second, "refresh should resample");
        assert_eq!(store.seen_tasks(), 1);
    }

    #[test]
    fn exemplar_update_with_few_examples_stores_all() {
        let small = Dataset::new(round_data(120).examples()[..4].to_vec());
        let mut store = ExemplarStore::new(10);
        let mut rng = seeding::rng_for(1, &[seeding::purpose::EXEMPLAR, 1, 2]);
        store.update(1, &small, &mut rng);
        assert_eq!(store.stored(1).unwrap().len(), 4);
    }

    #[test]
    fn store_size_is_bounded_by_seen_tasks() {
        let data = round_data(120);
        let mut store = ExemplarStore::new(10);
        let mut rng = seeding::rng_for(2, &[seeding::purpose::EXEMPLAR, 1, 3]);
        for task in 1..=3 {
            store.update(task, &data, &mut rng);
            assert!(store.total_stored() <= store.seen_tasks() * 10);
        }
    }

    #[test]
    fn compose_passthrough_without_replay() {
        let fresh = round_data(50);
        let mut store = ExemplarStore::new(10);
        let mut rng = seeding::rng_for(3, &[seeding::purpose::EXEMPLAR, 1, 4]);
        store.update(1, &fresh, &mut rng);

        let composed = compose_round_dataset(&fresh, &store, 2, false).unwrap();
        assert_eq!(composed, fresh);
    }

    #[test]
    fn compose_adds_previous_task_exemplars_only() {
        let task1 = round_data(120);
        let fresh = round_data(120);
        let mut store = ExemplarStore::new(10);
        let mut rng = seeding::rng_for(4, &[seeding::purpose::EXEMPLAR, 1, 5]);
        store.update(1, &task1, &mut rng);

        // training task 2: task-1 exemplars join
        let composed = compose_round_dataset(&fresh, &store, 2, true).unwrap();
        assert_eq!(composed.len(), 130);

        // current task's own slot is excluded
        store.update(2, &fresh, &mut rng);
        let composed = compose_round_dataset(&fresh, &store, 2, true).unwrap();
        assert_eq!(composed.len(), 130);
    }

    #[test]
    fn compose_with_empty_store_is_identity() {
        let fresh = round_data(30);
        let store = ExemplarStore::new(10);
        let composed = compose_round_dataset(&fresh, &store, 1, true).unwrap();
        assert_eq!(composed, fresh);
    }
}
