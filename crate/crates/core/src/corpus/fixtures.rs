//! Worked problems with hand-checked gold trees, shared by tests and demos.

use super::{number_map, ProblemInstance};
use crate::uet::parse_prefix;

/// Builds an instance from whitespace-tokenized text and a gold prefix string.
pub fn instance(id: &str, text: &str, gold_prefix: &str, answers: &[f64], unknowns: usize) -> ProblemInstance {
    let raw: Vec<String> = text.split_whitespace().map(String::from).collect();
    let (tokens, slots) = number_map(&raw);
    ProblemInstance {
        id: id.to_string(),
        tokens,
        slots,
        gold_prefix: parse_prefix(gold_prefix).expect("fixture prefix parses"),
        gold_answers: answers.to_vec(),
        unknown_count: unknowns,
    }
}

/// Chickens and rabbits: 20 heads, 50 feet; `2x + 4(n0 - x) = n1`.
pub fn chickens_and_rabbits() -> ProblemInstance {
    instance(
        "case-1",
        "rabbits and chickens are locked in a cage , counting from the top there were 20 heads , \
         counting from the bottom there were 50 feet . how many chickens were locked in the cage ?",
        "= + * 2 x * 4 - n0 x n1",
        &[15.0],
        1,
    )
}

/// The same problem posed with two unknowns.
pub fn chickens_and_rabbits_system() -> ProblemInstance {
    instance(
        "case-1-system",
        "rabbits and chickens are locked in a cage , counting from the top there were 20 heads , \
         counting from the bottom there were 50 feet . how many chickens and rabbits are there ?",
        "; = + x y n0 = + * 2 x * 4 y n1",
        &[15.0, 5.0],
        2,
    )
}

/// Boat between docks: `x/n2 - n4 = x/n3 + n4`.
pub fn boat_between_docks() -> ProblemInstance {
    instance(
        "case-2",
        "1 boat sails between 2 docks , it takes 5 hours downstream and 7 hours upstream . \
         the water flows at 5 km per hour . what is the distance between the docks ?",
        "= - / x n2 n4 + / x n3 n4",
        &[175.0],
        1,
    )
}

/// Sorting books: `x/n2 + n5(x + n4)/n2 = 1`.
pub fn sorting_books() -> ProblemInstance {
    instance(
        "case-3",
        "given 1 stack of books , 1 student can sort them in 60 hours . in the first 1 hours several \
         students sorted books , later 15 more students joined them and they finished in another 2 hours . \
         how many students were working at the beginning ?",
        "= + / x n2 / * n5 + x n4 n2 1",
        &[10.0],
        1,
    )
}

/// Sheepfold against a wall: `x(n4 - 2x) = n5`.
pub fn sheepfold() -> ProblemInstance {
    instance(
        "case-4",
        "a farm owner builds 1 rectangle sheepfold with 1 side against a wall that is 25 m long , \
         the other 1 sides use 50 m of fence . if the area is 300 m ^ 2 , find the side vertical to the wall .",
        "= * x - n4 * 2 x n5",
        &[15.0],
        1,
    )
}

pub fn worked_cases() -> Vec<ProblemInstance> {
    vec![
        chickens_and_rabbits(),
        chickens_and_rabbits_system(),
        boat_between_docks(),
        sorting_books(),
        sheepfold(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::default_constants;

    #[test]
    fn fixtures_validate() {
        for p in worked_cases() {
            p.validate(&default_constants()).unwrap();
        }
        let b = boat_between_docks();
        assert_eq!(b.slots.len(), 5);
        assert_eq!(b.gold_prefix.len(), 11);
        let s = sheepfold();
        assert_eq!(s.slots[4].value.to_f64(), 50.0);
        assert_eq!(s.slots[5].value.to_f64(), 300.0);
    }
}
