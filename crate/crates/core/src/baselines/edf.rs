use crate::env::Observation;
use crate::model::{Schedule, TaskId};

/// Earliest-deadline-first list scheduling under estimated durations.
///
/// Among unscheduled tasks whose wait predecessors are already scheduled,
/// picks the earliest deadline (tasks without a deadline come last, ties go
/// to the lower index) and gives it to the agent that frees up first (ties to
/// the lower agent index). Agent bookkeeping mirrors the dispatcher: a task
/// that would miss its deadline occupies no agent time.
pub fn edf_schedule(obs: &Observation) -> Schedule {
    let n = obs.num_tasks();
    let num_agents = obs.num_agents();
    let durations = &obs.estimated_durations;

    let mut preds: Vec<Vec<(TaskId, f64)>> = vec![Vec::new(); n];
    for w in &obs.waits {
        preds[w.to].push((w.from, w.gap));
    }
    let mut scheduled = vec![false; n];
    let mut finish: Vec<Option<f64>> = vec![None; n];
    let mut agent_free = vec![0.0f64; num_agents];
    let mut schedule = Schedule::default();
    if num_agents == 0 {
        return schedule;
    }

    let deadline_key = |t: TaskId| obs.deadlines.get(&t).copied().unwrap_or(f64::INFINITY);
    for _ in 0..n {
        let ready = (0..n).filter(|&t| !scheduled[t] && preds[t].iter().all(|&(p, _)| scheduled[p]));
        let fallback = (0..n).filter(|&t| !scheduled[t]);
        let pick = |it: &mut dyn Iterator<Item = TaskId>| {
            it.min_by(|&a, &b| deadline_key(a).total_cmp(&deadline_key(b)).then(a.cmp(&b)))
        };
        let task = pick(&mut ready.into_iter())
            .or_else(|| pick(&mut fallback.into_iter()))
            .expect("an unscheduled task remains");

        let agent = (0..num_agents)
            .min_by(|&a, &b| agent_free[a].total_cmp(&agent_free[b]).then(a.cmp(&b)))
            .expect("at least one agent");

        let mut start = Some(agent_free[agent]);
        for &(p, gap) in &preds[task] {
            start = start.zip(finish[p]).map(|(s, f)| s.max(f + gap));
        }
        if let Some(s) = start {
            let fin = s + durations.get(task, agent);
            if obs.deadlines.get(&task).is_none_or(|&d| fin <= d) {
                finish[task] = Some(fin);
                agent_free[agent] = fin;
            }
        }
        scheduled[task] = true;
        schedule.push(task, agent);
    }
    schedule
}
