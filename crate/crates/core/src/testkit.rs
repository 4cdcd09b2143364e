//! Random programs and scenes for property tests and benchmarks.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ast::{ArgValue, Criteria, OperatorKind, Program, Statement, FINAL_RESULT};
use crate::scene::{BBox, Proposal, Scene, SceneBuilder};
use crate::verify::CategoryBank;

pub const LABELS: [&str; 5] = ["person", "dog", "car", "cup", "chair"];
pub const ATTRIBUTES: [&str; 3] = ["red", "wooden", "striped"];
pub const POSITIONS: [&str; 8] = ["left", "right", "top", "bottom", "center", "9 o clock", "outmost right", "middle"];

const DIRECTIONS: [Criteria; 4] = [Criteria::Left, Criteria::Right, Criteria::Top, Criteria::Bottom];
const NON_FIND: [OperatorKind; 9] = [
    OperatorKind::Locate,
    OperatorKind::Order,
    OperatorKind::AbsoluteDepth,
    OperatorKind::Size,
    OperatorKind::Property,
    OperatorKind::FindDirection,
    OperatorKind::FindNear,
    OperatorKind::FindInside,
    OperatorKind::RelativeDepth,
];

fn pick<'a, R: Rng + ?Sized, T>(rng: &mut R, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("non-empty choice")
}

/// A valid program of `1..=max_body` statements before the final `RESULT`,
/// drawing labels, attributes and positions from the module constants.
pub fn random_program<R: Rng + ?Sized>(rng: &mut R, max_body: usize) -> Program {
    let body = rng.gen_range(1..=max_body.max(1));
    let mut statements = Vec::with_capacity(body + 1);
    let mut vars: Vec<String> = Vec::new();
    for i in 0..body {
        let line = i as u32 + 1;
        let target = format!("B{i}");
        let find_prob = if vars.is_empty() { 1.0 } else { 0.35 };
        let st = if rng.gen_bool(find_prob) {
            Statement::new(&target, OperatorKind::Find, line)
                .with_arg("object_name", ArgValue::StringLiteral((*pick(rng, &LABELS)).into()))
        } else {
            let op = *pick(rng, &NON_FIND);
            let object = ArgValue::VariableRef(pick(rng, &vars).clone());
            let st = Statement::new(&target, op, line).with_arg("object", object);
            match op {
                OperatorKind::Locate => st.with_arg("position", ArgValue::StringLiteral((*pick(rng, &POSITIONS)).into())),
                OperatorKind::Order => st
                    .with_arg("criteria", ArgValue::Criteria(*pick(rng, &DIRECTIONS)))
                    .with_arg("rank", ArgValue::Number(rng.gen_range(1..=3))),
                OperatorKind::AbsoluteDepth => {
                    st.with_arg("criteria", ArgValue::Criteria(*pick(rng, &[Criteria::Front, Criteria::Behind])))
                }
                OperatorKind::Size => st.with_arg("criteria", ArgValue::Criteria(*pick(rng, &[Criteria::Big, Criteria::Small]))),
                OperatorKind::Property => st.with_arg("attribute", ArgValue::StringLiteral((*pick(rng, &ATTRIBUTES)).into())),
                _ => {
                    let st = st.with_arg("reference_object", ArgValue::VariableRef(pick(rng, &vars).clone()));
                    match op {
                        OperatorKind::FindDirection => st.with_arg("criteria", ArgValue::Criteria(*pick(rng, &DIRECTIONS))),
                        OperatorKind::RelativeDepth => {
                            st.with_arg("criteria", ArgValue::Criteria(*pick(rng, &[Criteria::Front, Criteria::Behind])))
                        }
                        _ => st,
                    }
                }
            }
        };
        statements.push(st);
        vars.push(target);
    }
    let last = vars.last().expect("body is non-empty").clone();
    statements.push(
        Statement::new(FINAL_RESULT, OperatorKind::Result, body as u32 + 1).with_arg("object", ArgValue::VariableRef(last)),
    );
    Program::new(statements)
}

/// A random box whose center lies inside a `width`×`height` image.
pub fn random_box<R: Rng + ?Sized>(rng: &mut R, width: f64, height: f64) -> BBox {
    BBox::new(
        rng.gen_range(0.0..width),
        rng.gen_range(0.0..height),
        rng.gen_range(4.0..width / 3.0),
        rng.gen_range(4.0..height / 3.0),
    )
}

/// Proposals with random boxes and scores, ids `{prefix}{i}`.
pub fn random_proposals<R: Rng + ?Sized>(rng: &mut R, prefix: &str, n: usize, width: f64, height: f64) -> Vec<Proposal> {
    (0..n)
        .map(|i| Proposal {
            id: format!("{prefix}{i}"),
            bbox: random_box(rng, width, height),
            score: rng.gen_range(0.0..1.0),
            source_label: prefix.into(),
        })
        .collect()
}

/// A complete scene over every label in [`LABELS`]: each proposal carries
/// similarities to its label, every attribute and every bank category, and
/// a depth. Roughly half the proposals are built to pass verification.
pub fn random_scene<R: Rng + ?Sized>(rng: &mut R, image_id: &str, max_per_label: usize, bank: &CategoryBank) -> Scene {
    let (w, h) = (640.0, 480.0);
    let mut b = SceneBuilder::new(image_id, w, h);
    for label in LABELS {
        b = b.label(label);
        let n = rng.gen_range(0..=max_per_label);
        for i in 0..n {
            let id = format!("{label}-{i}");
            let bank_sim: f64 = rng.gen_range(0.10..0.20);
            let target_sim = if rng.gen_bool(0.5) { rng.gen_range(0.25..0.35) } else { rng.gen_range(0.0..0.15) };
            b = b
                .detection(label, &id, random_box(rng, w, h), rng.gen_range(0.0..1.0))
                .similarity(&id, label, target_sim)
                .depth(&id, rng.gen_range(0.0..10.0));
            for c in bank.categories() {
                if !c.eq_ignore_ascii_case(label) {
                    b = b.similarity(&id, c, bank_sim + rng.gen_range(-0.05..0.05));
                }
            }
            for a in ATTRIBUTES {
                b = b.similarity(&id, a, rng.gen_range(0.0..0.4));
            }
        }
    }
    b.build().expect("generated scene is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validator::validate_program;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn generated_programs_validate() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let p = random_program(&mut rng, 6);
            assert!(validate_program(p.clone()).is_ok(), "{p:?}");
        }
    }

    #[test]
    fn generated_scenes_cover_labels() {
        let mut rng = StdRng::seed_from_u64(3);
        let s = random_scene(&mut rng, "img", 3, &CategoryBank::coco());
        for l in LABELS {
            assert!(s.lookup_detections(l).is_ok());
        }
    }
}
