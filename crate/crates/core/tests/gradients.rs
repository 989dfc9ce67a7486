//! Finite-difference and directional-derivative oracles for the input
//! gradients and the edit scores built on them.

mod common;

use common::oracles;

#[test]
fn char_model_input_gradient_matches_central_differences() {
    let (model, examples) = common::tiny_char(40, 3);
    let (worst, checked) = oracles::char_fd(&model, &examples[..4], 8, 11);
    assert!(checked >= 20);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn word_model_input_gradient_matches_central_differences() {
    let (model, texts) = common::tiny_word(5);
    let (worst, checked) = oracles::word_fd(&model, &texts[..4], 6, 12);
    assert!(checked >= 20);
    assert!(worst < 1e-3, "worst relative error {worst}");
}

#[test]
fn tape_primitives_match_central_differences() {
    for (name, err) in oracles::primitive_errors(5) {
        assert!(err < 1e-4, "{name}: relative error {err}");
    }
}

#[test]
fn normalized_scores_are_directional_derivatives_for_every_kind() {
    let (model, examples) = common::tiny_char(20, 4);
    for (kind, tested, failures) in oracles::directional(&model, &examples[..3], 13) {
        assert!(tested > 0, "no {kind:?} edits sampled");
        assert!(failures.is_empty(), "{kind:?}: {failures:?}");
    }
}

#[test]
fn sparse_scores_equal_dense_dot_products() {
    let (model, examples) = common::tiny_char(30, 6);
    let (worst, compared) = oracles::sparse_vs_dense(&model, &examples[..10], 1000, 14);
    assert_eq!(compared, 1000);
    assert!(worst <= 1e-9, "worst difference {worst}");
}

#[test]
fn dense_loss_handles_documents_shorter_than_the_word_limit() {
    let (model, _) = common::tiny_char(40, 3);
    let x = hotflip::corpus::OneHotText::encode("oil prices", &model.alphabet, &model.config.encode).unwrap();
    let dense = model.loss_dense(&x.to_tensor(), x.lengths(), 1).unwrap();
    assert!((dense - model.loss(&x, 1).unwrap()).abs() < 1e-12);
    let ex = hotflip::corpus::LabeledExample { x, label: 1, text: "oil prices".into() };
    let (worst, checked) = oracles::char_fd(&model, std::slice::from_ref(&ex), 20, 16);
    assert_eq!(checked, 20);
    assert!(worst < 1e-3, "worst relative error {worst}");
}
