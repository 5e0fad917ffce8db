//! Non-dominated sorting and crowding distance for (fitness up, nodes down).

use std::cmp::Ordering;

/// `(fitness, node_count)`.
pub type Objectives = (f64, f64);

/// `a` is at least as good on both objectives and better on one.
pub fn dominates(a: Objectives, b: Objectives) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Fronts of indices, best first; each front keeps input order.
pub fn non_dominated_sort(points: &[Objectives]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(points[i], points[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(points[j], points[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of `front`, aligned with `front`.
/// Boundary points get infinity.
pub fn crowding_distance(points: &[Objectives], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let objectives: [fn(Objectives) -> f64; 2] = [|p| p.0, |p| p.1];
    for obj in objectives {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| obj(points[front[a]]).total_cmp(&obj(points[front[b]])).then(a.cmp(&b)));
        let lo = obj(points[front[order[0]]]);
        let hi = obj(points[front[order[m - 1]]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..m - 1 {
                let gap = obj(points[front[order[k + 1]]]) - obj(points[front[order[k - 1]]]);
                dist[order[k]] += gap / (hi - lo);
            }
        }
    }
    dist
}

/// Rank (front index) and crowding distance for every point.
pub fn rank_and_crowding(points: &[Objectives]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; points.len()];
    let mut crowd = vec![0.0; points.len()];
    for (r, front) in non_dominated_sort(points).iter().enumerate() {
        for (&i, d) in front.iter().zip(crowding_distance(points, front)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd)
}

/// Lower rank wins, then larger crowding distance.
pub fn crowded_compare(rank: &[usize], crowd: &[f64], a: usize, b: usize) -> Ordering {
    rank[a].cmp(&rank[b]).then(crowd[b].total_cmp(&crowd[a]))
}

/// Indices of `n` survivors: whole fronts in order, the last partial front
/// cut by descending crowding distance (ties keep index order).
pub fn environmental_selection(points: &[Objectives], n: usize) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(n);
    for front in non_dominated_sort(points) {
        if chosen.len() + front.len() <= n {
            chosen.extend(front);
            if chosen.len() == n {
                break;
            }
            continue;
        }
        let d = crowding_distance(points, &front);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
        let need = n - chosen.len();
        chosen.extend(order[..need].iter().map(|&k| front[k]));
        break;
    }
    chosen
}
