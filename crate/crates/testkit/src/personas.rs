//! Scripted sessions whose content calls succeed or fail on demand.

use rand::Rng;
use strot::backend::{Fixture, Persona, Script};
use strot::prompt::Stage;

use crate::fixtures::region_responses;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Draw {
    Good,
    BadField,
    Malformed,
    Empty,
}

/// `len` draws; always failing when `always_bad`, otherwise good with
/// probability `p_good`.
pub fn random_draws(rng: &mut impl Rng, len: usize, always_bad: bool, p_good: f64) -> Vec<Draw> {
    (0..len)
        .map(|_| {
            if !always_bad && rng.gen_bool(p_good) {
                Draw::Good
            } else {
                [Draw::BadField, Draw::Malformed, Draw::Empty][rng.gen_range(0..3)]
            }
        })
        .collect()
}

/// A good plan followed by one content fixture per draw, served in order.
pub fn persona_script(draws: &[Draw]) -> Script {
    let (plan, program) = region_responses();
    let mut fixtures = vec![Fixture::for_stage(Stage::Plan, plan)];
    for d in draws {
        let mut f = Fixture::for_stage(Stage::Synthesize, program.clone());
        f.stage = None;
        fixtures.push(match d {
            Draw::Good => f,
            Draw::BadField => f.with_persona(Persona::EmitBadField {
                field: "New cases".into(),
            }),
            Draw::Malformed => f.with_persona(Persona::EmitMalformedObject),
            Draw::Empty => f.with_persona(Persona::EmitEmpty),
        });
    }
    Script::new(fixtures)
}

/// Refine attempts a session with `budget` must use for `draws`, or `None`
/// when it must fail.
pub fn expected_refines(draws: &[Draw], budget: usize) -> Option<usize> {
    draws.iter().position(|d| *d == Draw::Good).filter(|&i| i <= budget)
}
