import numpy as np
import pytest

from regionrec.attnmask import (
    CascadeConfig,
    Segment,
    SequenceLayout,
    build_cascade_mask,
    canonical_layout,
    dump_attention_mask,
    extend_for_decode,
    parse_attention_dump,
    parse_layout_header,
    to_additive,
)

from conftest import oracle_cascade_bits, random_layout

FIG4 = parse_layout_header("image:2 text:1 mask0:2 sep:1 mask1:2 out0:1 sep:1 out1:1")

ALL_CONFIGS = [
    CascadeConfig.full_cascade(),
    CascadeConfig.region_variant(),
    CascadeConfig.output_variant(),
    CascadeConfig.plain_causal(),
]


def test_fig4_full_cascade_matches_pairwise_oracle():
    built = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    assert np.array_equal(built.bits, oracle_cascade_bits(FIG4, CascadeConfig.full_cascade()))


@pytest.mark.parametrize("config", ALL_CONFIGS, ids=["full", "region", "output", "causal"])
def test_fig4_all_configs_match_oracle(config):
    built = build_cascade_mask(FIG4, config)
    assert np.array_equal(built.bits, oracle_cascade_bits(FIG4, config))


def test_k1_full_cascade_equals_plain_causal_without_separators():
    # no cross-instance pairs exist, and with no separator rows the full
    # cascade degenerates to the causal triangle
    layout = SequenceLayout(
        (Segment("image", 2), Segment("text", 1), Segment("mask", 2, 0), Segment("out", 2, 0))
    )
    full = build_cascade_mask(layout, CascadeConfig.full_cascade())
    causal = build_cascade_mask(layout, CascadeConfig.plain_causal())
    assert np.array_equal(full.bits, causal.bits)
    assert np.array_equal(full.bits, np.tril(np.ones((7, 7), dtype=bool)))


def test_k1_with_separator_differs_only_at_separator_pairs():
    layout = canonical_layout(2, 1, [2], 2)  # image:2 text:1 mask0:2 sep:1 out0:2
    full = build_cascade_mask(layout, CascadeConfig.full_cascade())
    causal = build_cascade_mask(layout, CascadeConfig.plain_causal())
    diff = full.bits ^ causal.bits
    sep = layout.positions("sep")[0]
    out_rows = layout.positions("out", 0)
    # differences live only in the separator column of output rows
    expected = np.zeros_like(diff)
    expected[out_rows, sep] = True
    assert np.array_equal(diff, expected)


def test_region_only_variant_differs_from_full_exactly_at_output_rows():
    full = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    region = build_cascade_mask(FIG4, CascadeConfig.region_variant())
    diff = full.bits ^ region.bits
    kinds, insts = FIG4.position_kinds()
    # all differences are visibility the region variant restores to output rows:
    # other-instance masks, separators, and earlier output chunks
    for q, k in np.argwhere(diff):
        assert kinds[q] == 4
        assert region.bits[q, k] and not full.bits[q, k]
        assert kinds[k] == 2 or (kinds[k] in (3, 4) and insts[k] != insts[q])
    out1 = FIG4.positions("out", 1)[0]
    out0 = FIG4.positions("out", 0)[0]
    assert diff[out1, out0]  # output(1) -> output(0)
    assert diff[out0, FIG4.positions("mask", 1)].all()  # output(i) -> mask(j != i)
    assert diff[out1, FIG4.positions("mask", 0)].all()
    assert np.array_equal(diff, oracle_cascade_bits(FIG4, CascadeConfig.region_variant()) ^ oracle_cascade_bits(FIG4, CascadeConfig.full_cascade()))


def test_random_layouts_match_oracle_all_configs(rng):
    for _ in range(150):
        layout = random_layout(rng)
        for config in ALL_CONFIGS:
            built = build_cascade_mask(layout, config)
            assert np.array_equal(built.bits, oracle_cascade_bits(layout, config))


def test_subset_of_causal(rng):
    for _ in range(25):
        layout = random_layout(rng)
        for config in ALL_CONFIGS:
            bits = build_cascade_mask(layout, config).bits
            assert not np.triu(bits, 1).any()


def test_three_principles_quantified(rng):
    for _ in range(25):
        layout = random_layout(rng)
        kinds, insts = layout.position_kinds()
        full = build_cascade_mask(layout, CascadeConfig.full_cascade()).bits
        k = layout.num_objects
        for i in range(k):
            for j in range(k):
                if i == j:
                    continue
                rows = layout.positions("mask", i)
                cols = layout.positions("mask", j)
                assert not full[np.ix_(rows, cols)].any()  # principle 1
        for i in range(k):
            rows = layout.positions("out", i)
            for j in range(i):
                cols = layout.positions("out", j)
                assert not full[np.ix_(rows, cols)].any()  # principle 2
            allowed = (kinds == 0) | (kinds == 1)
            allowed |= ((kinds == 3) | (kinds == 4)) & (insts == i)
            for q in rows:
                visible = np.flatnonzero(full[q])
                assert allowed[visible].all()  # principle 3


def test_variant_lattice(rng):
    for _ in range(25):
        layout = random_layout(rng)
        full = build_cascade_mask(layout, CascadeConfig.full_cascade()).bits
        region = build_cascade_mask(layout, CascadeConfig.region_variant()).bits
        output = build_cascade_mask(layout, CascadeConfig.output_variant()).bits
        causal = build_cascade_mask(layout, CascadeConfig.plain_causal()).bits
        assert not (full & ~region).any()
        assert not (full & ~output).any()
        assert not (output & ~causal).any()
        assert not (region & ~causal).any()


def test_additive_map():
    built = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    add = to_additive(built)
    assert add.shape == built.bits.shape
    assert (add[built.bits] == 0.0).all()
    assert np.isneginf(add[~built.bits]).all()
    sep_row = FIG4.positions("sep")[0]
    assert np.isneginf(add[sep_row]).all()


def test_extend_second_token_of_out0_in_fig4():
    base = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    grown_mask, grown_layout = extend_for_decode(base, FIG4, 0)
    assert grown_layout.header() == "image:2 text:1 mask0:2 sep:1 mask1:2 out0:2 sep:1 out1:1"
    new_pos = FIG4.positions("out", 0)[0] + 1  # inserted at the chunk end
    visible = set(np.flatnonzero(grown_mask.bits[new_pos]).tolist())
    expected = set(grown_layout.positions("image").tolist())
    expected |= set(grown_layout.positions("text").tolist())
    expected |= set(grown_layout.positions("mask", 0).tolist())
    expected |= {int(grown_layout.positions("out", 0)[0]), int(new_pos)}
    assert visible == expected


def test_extend_out1_sees_nothing_of_object0():
    base = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    grown_mask, grown_layout = extend_for_decode(base, FIG4, 1)
    new_pos = grown_layout.positions("out", 1)[-1]
    forbidden = np.concatenate([grown_layout.positions("mask", 0), grown_layout.positions("out", 0)])
    assert not grown_mask.bits[new_pos, forbidden].any()


def test_extend_then_rebuild_identity():
    base = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    grown_mask, grown_layout = extend_for_decode(base, FIG4, 0)
    rebuilt = build_cascade_mask(grown_layout, CascadeConfig.full_cascade())
    assert np.array_equal(grown_mask.bits, rebuilt.bits)


@pytest.mark.parametrize("config", ALL_CONFIGS, ids=["full", "region", "output", "causal"])
def test_incremental_batch_equivalence_random_schedules(rng, config):
    for _ in range(40):
        k = int(rng.integers(1, 4))
        layout = canonical_layout(int(rng.integers(1, 4)), int(rng.integers(0, 3)), [int(rng.integers(1, 4)) for _ in range(k)], 0)
        mask = build_cascade_mask(layout, config)
        owners = [int(rng.integers(0, k)) for _ in range(int(rng.integers(1, 9)))]
        for owner in owners:
            mask, layout = extend_for_decode(mask, layout, owner, config)
        rebuilt = build_cascade_mask(layout, config)
        assert np.array_equal(mask.bits, rebuilt.bits)
        assert np.array_equal(mask.bits, oracle_cascade_bits(layout, config))


def test_extend_owner_out_of_range():
    base = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    with pytest.raises(IndexError):
        extend_for_decode(base, FIG4, 2)


def test_dump_round_trip():
    built = build_cascade_mask(FIG4, CascadeConfig.full_cascade())
    text = dump_attention_mask(built, FIG4)
    back_mask, back_layout = parse_attention_dump(text)
    assert np.array_equal(back_mask.bits, built.bits)
    assert back_layout.header() == FIG4.header()


def test_layout_validation():
    with pytest.raises(ValueError, match="image"):
        SequenceLayout((Segment("text", 1),))
    with pytest.raises(ValueError, match="order"):
        SequenceLayout((Segment("image", 1), Segment("mask", 1, 1), Segment("out", 1, 1)))
    with pytest.raises(ValueError, match="precede"):
        SequenceLayout(
            (Segment("image", 1), Segment("out", 1, 0), Segment("mask", 1, 0))
        )


def test_canonical_layout_structure():
    layout = canonical_layout(256, 4, [27], 8)
    assert layout.header() == "image:256 text:4 mask0:27 sep:1 out0:8"
    assert layout.n == 296
    no_text = canonical_layout(4, 0, [2, 3], 2)
    assert no_text.header() == "image:4 mask0:2 sep:1 mask1:3 sep:1 out0:2 out1:2"


def test_diagonal_true_for_non_separator_rows(rng):
    for _ in range(20):
        layout = random_layout(rng)
        kinds, _ = layout.position_kinds()
        for config in ALL_CONFIGS:
            bits = build_cascade_mask(layout, config).bits
            diag = np.diag(bits)
            assert (diag | (kinds == 2)).all()
