import numpy as np
import pytest

from uniprompt import autodiff as ad
from uniprompt import prompts
from uniprompt.encoders import TextEncoder, TextEncoderSpec
from uniprompt.prompts import PromptConfig, PromptParams


def make_config(**overrides):
    base = dict(
        class_names=("cat", "dog", "bird"),
        domain_tags=("target", "source1", "source2"),
        target_tag="target",
        m1=4,
        m2=3,
        seed=0,
    )
    base.update(overrides)
    return PromptConfig(**base)


@pytest.fixture(scope="module")
def encoder():
    config = make_config()
    return TextEncoder(TextEncoderSpec(vocabulary=config.vocabulary(), seed=0))


def test_init_deterministic():
    config = make_config()
    a = prompts.init_params(config, token_dim=32)
    b = prompts.init_params(config, token_dim=32)
    assert a.v.values.tobytes() == b.v.values.tobytes()
    assert a.t.values.tobytes() == b.t.values.tobytes()


def test_init_shapes():
    config = make_config(m1=16, m2=16, class_names=tuple(f"c{i}" for i in range(10)),
                         domain_tags=("target", "s1", "s2", "s3"), target_tag="target")
    params = prompts.init_params(config, token_dim=32)
    assert params.v.shape == (10, 16, 32)
    assert params.v.values.size == 10 * 16 * 32
    assert params.t.shape == (4, 16, 32)
    assert params.t.values.size == 4 * 16 * 32


def test_init_seed_sensitivity():
    a = prompts.init_params(make_config(seed=1), token_dim=8)
    b = prompts.init_params(make_config(seed=2), token_dim=8)
    assert np.max(np.abs(a.v.values - b.v.values)) > 1e-6


def test_prompt_length_formula(encoder):
    config = make_config()
    params = prompts.init_params(config, encoder.spec.token_dim)
    seq = prompts.assemble_prompt(params, config, encoder, 0, "target", "positive")
    # 3 prefix + m1 + 1 name token + 2 mid + m2 + 1 suffix
    assert seq.shape == (3 + config.m1 + 1 + 2 + config.m2 + 1, 32)
    assert seq.shape[0] == prompts.prompt_length(config, 0, "positive")


def test_multi_token_class_name_length(encoder_config=None):
    config = make_config(class_names=("cat", "big dog", "bird"))
    encoder = TextEncoder(TextEncoderSpec(vocabulary=config.vocabulary(), seed=0))
    params = prompts.init_params(config, 32)
    seq = prompts.assemble_prompt(params, config, encoder, 1, "target", "positive")
    assert seq.shape[0] == 3 + config.m1 + 2 + 2 + config.m2 + 1


def test_negative_polarity_contains_not_token(encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    not_row = encoder.token_embedding("not").values
    neg = prompts.assemble_prompt(params, config, encoder, 0, "target", "negative")
    pos = prompts.assemble_prompt(params, config, encoder, 0, "target", "positive")
    assert any(np.array_equal(row, not_row) for row in neg.values)
    assert not any(np.array_equal(row, not_row) for row in pos.values)
    assert neg.shape[0] == pos.shape[0] + 1


def test_domain_vectors_shared_across_classes(encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    seq_a = prompts.assemble_prompt(params, config, encoder, 0, "source1")
    seq_b = prompts.assemble_prompt(params, config, encoder, 2, "source1")
    t_a = seq_a.values[-(config.m2 + 1) : -1]
    t_b = seq_b.values[-(config.m2 + 1) : -1]
    assert np.array_equal(t_a, t_b)
    # both sequences read the same underlying storage: a write to the
    # shared t parameter shows up identically in fresh assemblies
    params.t.values[config.tag_index("source1")] += 0.25
    new_a = prompts.assemble_prompt(params, config, encoder, 0, "source1")
    new_b = prompts.assemble_prompt(params, config, encoder, 2, "source1")
    assert np.array_equal(
        new_a.values[-(config.m2 + 1) : -1], new_b.values[-(config.m2 + 1) : -1]
    )
    assert np.max(np.abs(new_a.values[-(config.m2 + 1) : -1] - t_a)) > 0.2


def test_polarity_rule_default_positive():
    config = make_config(private_class_owner=(None, "source1", None))
    assert config.polarity(1, "target") == "positive"


def test_polarity_rule_negates_foreign_privates():
    config = make_config(
        private_class_owner=(None, "source1", None),
        negate_foreign_source_privates=True,
    )
    assert config.polarity(1, "source1") == "positive"   # its own domain
    assert config.polarity(1, "target") == "negative"    # foreign domain
    assert config.polarity(1, "source2") == "negative"
    assert config.polarity(0, "target") == "positive"    # shared class


def test_embedding_unit_norm_all_pairs(encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    for c in range(config.num_classes):
        for tag in config.domain_tags:
            emb = prompts.text_class_embedding(params, config, encoder, c, tag)
            assert abs(np.linalg.norm(emb.values) - 1.0) < 1e-6


def test_changing_other_class_context_leaves_embedding_alone(encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    before = prompts.text_class_embedding(params, config, encoder, 0, "target").values.copy()
    params.v.values[1] += 0.5  # touch a different class
    after = prompts.text_class_embedding(params, config, encoder, 0, "target").values
    assert np.array_equal(before, after)
    params.v.values[0] += 0.5  # touch the class itself
    changed = prompts.text_class_embedding(params, config, encoder, 0, "target").values
    assert np.max(np.abs(changed - before)) > 1e-9


def test_gradient_reaches_only_used_vectors(encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    param_set = params.param_set()
    probe = ad.Tensor(np.random.default_rng(1).normal(size=32))

    def graph(p, _):
        emb = prompts.text_class_embedding(params, config, encoder, 1, "source2")
        return ad.tensor_sum(emb * probe)

    grads = ad.grad_loss(graph, param_set)
    v_grad, t_grad = grads["class_context"], grads["domain_vectors"]
    assert np.any(v_grad[1] != 0.0)
    assert np.all(v_grad[0] == 0.0) and np.all(v_grad[2] == 0.0)
    tag = config.tag_index("source2")
    assert np.any(t_grad[tag] != 0.0)
    for other in range(config.num_tags):
        if other != tag:
            assert np.all(t_grad[other] == 0.0)


def test_gradient_finite_difference_spot_check(encoder):
    config = make_config(m1=2, m2=2)
    params = prompts.init_params(config, 32)
    param_set = params.param_set()
    rng = np.random.default_rng(0)
    probe = ad.Tensor(rng.normal(size=32))

    def graph(p, _):
        emb = prompts.text_class_embedding(params, config, encoder, 0, "target")
        return ad.tensor_sum(emb * probe)

    grads = ad.grad_loss(graph, param_set)
    for name in ("class_context", "domain_vectors"):
        size = param_set[name].values.size
        for index in rng.choice(size, size=5, replace=False):
            fd = ad.finite_difference_gradient(graph, param_set, name, int(index))
            analytic = grads[name].flat[index]
            if abs(analytic) < 1e-3:
                assert abs(analytic - fd) < 1e-7
            else:
                assert abs(analytic - fd) / abs(fd) < 1e-4


def test_prompt_matrix_matches_single_prompts(encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    matrix = prompts.prompt_embedding_matrix(params, config, encoder)
    assert matrix.shape == (config.num_tags * config.num_classes, 32)
    for a, tag in enumerate(config.domain_tags):
        for c in range(config.num_classes):
            row = matrix.values[prompts.prompt_index(config, a, c)]
            single = prompts.text_class_embedding(params, config, encoder, c, tag).values
            assert np.allclose(row, single, atol=1e-9)


def test_prompt_matrix_mixed_lengths_and_polarities():
    config = make_config(
        class_names=("cat", "big dog", "bird"),
        private_class_owner=(None, "source1", None),
        negate_foreign_source_privates=True,
    )
    encoder = TextEncoder(TextEncoderSpec(vocabulary=config.vocabulary(), seed=0))
    params = prompts.init_params(config, 32)
    matrix = prompts.prompt_embedding_matrix(params, config, encoder)
    for a, tag in enumerate(config.domain_tags):
        for c in range(config.num_classes):
            row = matrix.values[prompts.prompt_index(config, a, c)]
            single = prompts.text_class_embedding(params, config, encoder, c, tag).values
            assert np.allclose(row, single, atol=1e-9)


def test_enumeration_covers_every_pair_once(encoder):
    config = make_config()
    seen = set()
    for a in range(config.num_tags):
        for c in range(config.num_classes):
            seen.add(prompts.prompt_index(config, a, c))
    assert seen == set(range(config.num_tags * config.num_classes))


def test_params_json_round_trip_exact(tmp_path, encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    path = tmp_path / "params.json"
    prompts.save_params(params, path)
    loaded = prompts.load_params(path)
    assert loaded.v.values.tobytes() == params.v.values.tobytes()
    assert loaded.t.values.tobytes() == params.t.values.tobytes()


def test_params_round_trip_with_disabled_blocks(tmp_path):
    config = make_config(use_class_context=False)
    params = prompts.init_params(config, 32)
    assert params.v is None
    path = tmp_path / "params.json"
    prompts.save_params(params, path)
    loaded = prompts.load_params(path)
    assert loaded.v is None
    assert loaded.t.values.tobytes() == params.t.values.tobytes()


def test_disabled_blocks_change_assembly():
    config = make_config(use_class_context=False, use_domain_vectors=False)
    encoder = TextEncoder(TextEncoderSpec(vocabulary=config.vocabulary(), seed=0))
    params = prompts.init_params(config, 32)
    assert params.param_set().names() == []
    seq = prompts.assemble_prompt(params, config, encoder, 0, "source1", "positive")
    # 3 prefix + 1 name + 2 mid + 1 literal domain token + 1 suffix
    assert seq.shape[0] == 8
    tag_row = encoder.token_embedding("source1").values
    assert any(np.array_equal(row, tag_row) for row in seq.values)


def test_config_validation():
    with pytest.raises(ValueError):
        make_config(m1=0)
    with pytest.raises(ValueError):
        make_config(class_names=("cat", "cat"))
    with pytest.raises(ValueError):
        make_config(target_tag="nope")
    with pytest.raises(ValueError):
        make_config(private_class_owner=(None,))


def test_invalid_indices_raise(encoder):
    config = make_config()
    params = prompts.init_params(config, 32)
    with pytest.raises(ValueError):
        prompts.assemble_prompt(params, config, encoder, 99, "target")
    with pytest.raises(ValueError):
        prompts.assemble_prompt(params, config, encoder, 0, "mars")
