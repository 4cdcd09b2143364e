//! Operator semantics over proposal sets.
//!
//! Relational operators keep an object when the relation holds against at
//! least one reference. Direction and depth comparisons are strict.

use alloc::vec::Vec;

use crate::ast::Criteria;
use crate::scene::{MissingEntry, Proposal, Scene};

/// Does `o` stand in direction `dir` relative to `r`, by center points?
pub fn direction_holds(o: &Proposal, r: &Proposal, dir: Criteria) -> bool {
    match dir {
        Criteria::Left => o.bbox.x < r.bbox.x,
        Criteria::Right => o.bbox.x > r.bbox.x,
        Criteria::Top => o.bbox.y < r.bbox.y,
        Criteria::Bottom => o.bbox.y > r.bbox.y,
        _ => false,
    }
}

pub fn find_direction(objs: &[Proposal], refs: &[Proposal], dir: Criteria) -> Vec<Proposal> {
    objs.iter().filter(|o| refs.iter().any(|r| direction_holds(o, r, dir))).cloned().collect()
}

pub fn near_holds(o: &Proposal, r: &Proposal, eta: f64) -> bool {
    o.bbox.center_distance(&r.bbox) <= eta * (o.bbox.diagonal() + r.bbox.diagonal()) / 2.0
}

pub fn find_near(objs: &[Proposal], refs: &[Proposal], eta: f64) -> Vec<Proposal> {
    objs.iter().filter(|o| refs.iter().any(|r| near_holds(o, r, eta))).cloned().collect()
}

pub fn inside_holds(o: &Proposal, r: &Proposal, gamma: f64) -> bool {
    let inter = o.bbox.intersection_area(&r.bbox);
    inter > 0.0 && inter / o.bbox.area() >= gamma
}

pub fn find_inside(objs: &[Proposal], refs: &[Proposal], gamma: f64) -> Vec<Proposal> {
    objs.iter().filter(|o| refs.iter().any(|r| inside_holds(o, r, gamma))).cloned().collect()
}

fn depths(objs: &[Proposal], scene: &Scene) -> Result<Vec<f64>, MissingEntry> {
    objs.iter().map(|p| scene.depth(&p.id)).collect()
}

/// Larger depth means closer to the camera.
pub fn relative_depth(objs: &[Proposal], refs: &[Proposal], which: Criteria, scene: &Scene) -> Result<Vec<Proposal>, MissingEntry> {
    let od = depths(objs, scene)?;
    let rd = depths(refs, scene)?;
    Ok(objs
        .iter()
        .zip(&od)
        .filter(|(_, &d)| {
            rd.iter().any(|&r| match which {
                Criteria::Front => d > r,
                Criteria::Behind => d < r,
                _ => false,
            })
        })
        .map(|(p, _)| p.clone())
        .collect())
}

/// Closest (`front`) or farthest (`behind`) single proposal; ties go to the
/// larger box, then the smaller id.
pub fn absolute_depth(objs: &[Proposal], which: Criteria, scene: &Scene) -> Result<Vec<Proposal>, MissingEntry> {
    let d = depths(objs, scene)?;
    let front = which == Criteria::Front;
    let best = objs.iter().zip(&d).min_by(|(a, da), (b, db)| {
        let by_depth = if front { db.total_cmp(da) } else { da.total_cmp(db) };
        by_depth
            .then_with(|| b.bbox.area().total_cmp(&a.bbox.area()))
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(best.map(|(p, _)| p.clone()).into_iter().collect())
}

/// Largest (`big`) or smallest (`small`) box; ties by smaller id.
pub fn size(objs: &[Proposal], which: Criteria) -> Vec<Proposal> {
    let big = which == Criteria::Big;
    objs.iter()
        .min_by(|a, b| {
            let ord = a.bbox.area().total_cmp(&b.bbox.area());
            let ord = if big { ord.reverse() } else { ord };
            ord.then_with(|| a.id.cmp(&b.id))
        })
        .cloned()
        .into_iter()
        .collect()
}

/// The `rank`-th proposal (1-based) counting from the `dir` side of the image.
pub fn order(objs: &[Proposal], dir: Criteria, rank: usize) -> Vec<Proposal> {
    if rank == 0 || rank > objs.len() {
        return Vec::new();
    }
    let key = |p: &Proposal| match dir {
        Criteria::Left | Criteria::Right => p.bbox.x,
        _ => p.bbox.y,
    };
    let descending = matches!(dir, Criteria::Right | Criteria::Bottom);
    let mut sorted: Vec<&Proposal> = objs.iter().collect();
    sorted.sort_by(|a, b| {
        let ord = key(a).total_cmp(&key(b));
        let ord = if descending { ord.reverse() } else { ord };
        ord.then_with(|| a.id.cmp(&b.id))
    });
    alloc::vec![sorted[rank - 1].clone()]
}

/// Highest `key`, then larger area, then smaller id.
pub fn select_best<'a>(objs: &'a [Proposal], keys: &[f64]) -> Option<&'a Proposal> {
    objs.iter()
        .zip(keys)
        .min_by(|(a, ka), (b, kb)| {
            kb.total_cmp(ka)
                .then_with(|| b.bbox.area().total_cmp(&a.bbox.area()))
                .then_with(|| a.id.cmp(&b.id))
        })
        .map(|(p, _)| p)
}
