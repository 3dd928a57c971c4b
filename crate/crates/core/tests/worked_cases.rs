use sau_core::corpus::{default_constants, fixtures, target_vocab};
use sau_core::eqsolve::{check_answer, solve_tree, ANSWER_TOLERANCE};
use sau_core::harness::{classify, ProblemType};
use sau_core::uet::{from_prefix, to_infix, to_infix_symbolic, Unknown};

#[test]
fn gold_trees_solve_to_the_stated_answers() {
    for p in fixtures::worked_cases() {
        let tree = from_prefix(&p.gold_prefix).unwrap();
        let sol = solve_tree(&tree, &p.slot_values(), &Unknown::ALL[..p.unknown_count]);
        assert!(check_answer(&sol, &p.gold_answers, ANSWER_TOLERANCE), "{}: {sol}", p.id);
        let vocab = target_vocab(&p, &default_constants());
        assert!(p.gold_prefix.iter().all(|y| vocab.contains(y)));
    }
}

#[test]
fn rendered_equations() {
    let p = fixtures::chickens_and_rabbits();
    let tree = from_prefix(&p.gold_prefix).unwrap();
    assert_eq!(to_infix_symbolic(&tree), vec!["2*x+4*(n0-x)=n1"]);
    let sheep = fixtures::sheepfold();
    let tree = from_prefix(&sheep.gold_prefix).unwrap();
    assert_eq!(to_infix(&tree, &sheep.slot_values()).unwrap(), vec!["x*(50-2*x)=300"]);
    let sol = solve_tree(&tree, &sheep.slot_values(), &[Unknown::X]);
    assert_eq!(sol.solutions, vec![vec![10.0], vec![15.0]]);
}

#[test]
fn problem_types() {
    let types: Vec<ProblemType> = fixtures::worked_cases().iter().map(classify).collect();
    assert!(types.contains(&ProblemType::LinearTwoVar));
    assert!(types.contains(&ProblemType::NonLinearOneVar));
    assert_eq!(types.iter().filter(|t| **t == ProblemType::LinearOneVar).count(), 3);
}
