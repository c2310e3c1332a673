from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from randembed.bitio import BitSequence
from randembed.embed import (EmbedKey, KeySchedule, SegmentGeometry, capacity, embed_blocks, embed_fixed,
                             embed_message, extract_blocks, extract_message, filler_bits, format_key, key_space,
                             keygen, layout, load_key, parity, parse_key, ratio, save_key, segment_bounds,
                             segment_count, verify_embedding)
from randembed.errors import (CountExceedsCapacity, InvalidGeometry, InvalidSkipList, KeyFormatError,
                              MessageTooLong)


@st.composite
def keys(draw, max_k=40):
    K = draw(st.integers(2, max_k))
    G = draw(st.integers(-(K // 2), K // 2))
    assume(K + G >= 1)
    mask = draw(st.sets(st.integers(1, K - 1), min_size=1))
    return EmbedKey(SegmentGeometry(K, G), tuple(mask))


@st.composite
def schedules(draw):
    entries = []
    for _ in range(draw(st.integers(1, 3))):
        # non-negative gaps keep targets strictly increasing across entries
        K = draw(st.integers(2, 20))
        G = draw(st.integers(0, 6))
        mask = draw(st.sets(st.integers(1, K - 1), min_size=1))
        entries.append((EmbedKey(SegmentGeometry(K, G), tuple(mask)), draw(st.integers(1, 4))))
    return KeySchedule(tuple(entries))


def entries_of(key):
    if isinstance(key, KeySchedule):
        return [(k.K, k.G, k.mask, c) for k, c in key.entries]
    return [(key.K, key.G, key.mask, 1)]


def rand_bits(seed, n):
    return np.random.default_rng(seed).integers(0, 2, n, dtype=np.uint8)


# -- geometry ------------------------------------------------------------------------

def test_geometry_validation():
    for K, G in [(1, 0), (5, -5), (5, -6), (3, -3)]:
        with pytest.raises(InvalidGeometry):
            SegmentGeometry(K, G)
    assert SegmentGeometry(81, -7).stride == 74
    with pytest.raises(InvalidGeometry):
        EmbedKey(SegmentGeometry(13, 0), (1, 3, 7, 10, 13))
    with pytest.raises(InvalidGeometry):
        EmbedKey(SegmentGeometry(13, 0), ())


def test_segment_bounds_and_count():
    g = SegmentGeometry(55, 5)
    assert segment_bounds(g, 0) == (0, 54)
    assert segment_bounds(g, 2) == (120, 174)
    assert segment_count(g, 1_000_000) == (1_000_000 - 55) // 60 + 1
    assert segment_count(g, 54) == 0
    assert segment_count(SegmentGeometry(10, 0), 10) == 1
    with pytest.raises(ValueError):
        segment_bounds(g, -1)


def test_ratio_and_key_space():
    assert ratio(EmbedKey.scheme1(95, 5)) == Fraction(1, 100)
    assert float(ratio(EmbedKey.scheme1(95, 5))) == 0.01
    assert key_space(55) == 2 ** 54
    sched = KeySchedule(((EmbedKey.scheme1(10, 0), 2), (EmbedKey.scheme1(20, 5), 1)))
    assert ratio(sched) == Fraction(3, 45)


def test_scheme_constructors():
    assert EmbedKey.scheme1(5).mask == (1, 2, 3, 4)
    assert EmbedKey.scheme2(59, 5, 1, 23).mask == (1, 24)
    assert EmbedKey.scheme2(13, 0, 1, (2, 6, 9)).mask == (1, 3, 7, 10)


# -- parity oracle -----------------------------------------------------------------------

@pytest.mark.parametrize("key", [EmbedKey.scheme1(55, 5), EmbedKey.scheme2(59, 5, 1, 23),
                                 EmbedKey.scheme2(30, 2, 4, (3, 11, 20))])
def test_parity_against_mod2_sum(key):
    rng = np.random.default_rng(key.K)
    block = rng.integers(0, 2, 100_000, dtype=np.uint8)
    lay = layout(key, block.size)
    picks = rng.choice(lay.count, 1000, replace=False)
    for n in picks:
        start = n * key.geometry.stride
        direct = sum(int(block[start + j - 1]) for j in key.mask) % 2
        assert parity(block, int(n), key) == direct
    embedded = embed_blocks(block, key)[0]
    for n in picks:
        start, target = segment_bounds(key.geometry, int(n))
        assert embedded[target] == sum(int(embedded[start + j - 1]) for j in key.mask) % 2


@settings(max_examples=150, deadline=None)
@given(keys(), st.integers(0, 2**32 - 1), st.integers(2, 400))
def test_embed_matches_sequential_oracle(key, seed, n):
    block = rand_bits(seed, n)
    lay = layout(key, n)
    data = rand_bits(seed + 1, lay.count)
    got = embed_blocks(block, key, data)[0]
    assert got.tolist() == oracles.naive_embed(block.tolist(), entries_of(key), data.tolist())
    assert extract_blocks(got, key)[0].tolist() == data.tolist()


@settings(max_examples=80, deadline=None)
@given(schedules(), st.integers(0, 2**32 - 1), st.integers(2, 400))
def test_schedule_matches_sequential_oracle(key, seed, n):
    block = rand_bits(seed, n)
    data = rand_bits(seed + 1, layout(key, n).count)
    got = embed_blocks(block, key, data)[0]
    assert got.tolist() == oracles.naive_embed(block.tolist(), entries_of(key), data.tolist())
    assert extract_blocks(got, key)[0].tolist() == oracles.naive_extract(got.tolist(), entries_of(key))


# -- sequence-level properties ---------------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(keys(), st.integers(0, 2**32 - 1), st.integers(1, 4), st.data())
def test_idempotence_and_bit_budget(key, seed, n_blocks, data):
    N = data.draw(st.integers(key.K, 300))
    seq = BitSequence.from_bits(rand_bits(seed, N * n_blocks + data.draw(st.integers(0, N - 1))))
    skip = data.draw(st.sets(st.integers(0, n_blocks - 1), max_size=n_blocks - 1))
    once = embed_fixed(seq, key, skip, N)
    assert once.length == seq.length
    changed = np.flatnonzero(once.bits() != seq.bits())
    assert changed.size <= capacity(seq.length, key, skip, N)
    lay = layout(key, N)
    targets = {b * N + int(t) for b in range(n_blocks) if b not in skip for t in lay.targets}
    assert set(changed.tolist()) <= targets
    assert verify_embedding(once, key, N)[[b for b in range(n_blocks) if b not in skip]].all()
    if key.G >= 0:
        assert embed_fixed(once, key, skip, N) == once


@settings(max_examples=150, deadline=None)
@given(st.one_of(keys(), schedules()), st.integers(0, 2**32 - 1), st.data())
def test_message_round_trip(key, seed, data):
    kmax = max(k.K for k, _ in (key.entries if isinstance(key, KeySchedule) else [(key, 1)]))
    N = data.draw(st.integers(kmax, 400))
    n_blocks = data.draw(st.integers(1, 4))
    seq = BitSequence.from_bits(rand_bits(seed, N * n_blocks))
    skip = data.draw(st.sets(st.integers(0, n_blocks - 1), max_size=n_blocks - 1))
    cap = capacity(seq.length, key, skip, N)
    msg = BitSequence.from_bits(rand_bits(seed + 7, data.draw(st.integers(0, cap))))
    stego = embed_message(seq, key, msg, skip, N)
    assert extract_message(stego, key, skip, N, msg.length) == msg
    for b in skip:
        assert np.array_equal(stego.bits()[b * N:(b + 1) * N], seq.bits()[b * N:(b + 1) * N])


def test_message_errors():
    seq = BitSequence.from_bits(rand_bits(0, 1000))
    key = EmbedKey.scheme1(10, 0)
    cap = capacity(1000, key, (), 100)
    assert cap == 100
    with pytest.raises(MessageTooLong):
        embed_message(seq, key, BitSequence.zeros(cap + 1), (), 100)
    with pytest.raises(CountExceedsCapacity):
        extract_message(seq, key, (), 100, cap + 1)
    with pytest.raises(InvalidSkipList):
        embed_fixed(seq, key, [10], 100)
    with pytest.raises(InvalidGeometry):
        embed_fixed(seq, EmbedKey.scheme1(200), (), 100)


def test_overlap_geometry_k81_g_minus7():
    key = EmbedKey.scheme1(81, -7)
    seq = BitSequence.from_bits(rand_bits(81, 3 * 100_000))
    fixed = embed_fixed(seq, key, (), 100_000)
    assert verify_embedding(fixed, key, 100_000).all()
    msg = BitSequence.from_bits(rand_bits(82, capacity(seq.length, key, (), 100_000)))
    assert extract_message(embed_message(seq, key, msg, (), 100_000), key, (), 100_000) == msg


def test_single_segment_per_block():
    N = 1000
    key = EmbedKey.scheme1(N)
    seq = BitSequence.from_bits(rand_bits(3, 5 * N))
    out = embed_fixed(seq, key, (), N)
    assert np.count_nonzero(out.bits() != seq.bits()) <= 5


def test_filler_bits_independent_of_chunking():
    assert np.array_equal(filler_bits(9, 3, 100)[:50], filler_bits(9, 3, 50))
    assert not np.array_equal(filler_bits(9, 3, 64), filler_bits(9, 4, 64))
    bits = filler_bits(123, 0, 10 ** 6)
    assert abs(bits.mean() - 0.5) < 4 * 0.5 / 1000


# -- keys ----------------------------------------------------------------------------

def test_keygen_is_seeded_and_valid():
    a, b = keygen(55, 5, seed=1), keygen(55, 5, seed=1)
    assert a == b and a.mask and max(a.mask) <= 54
    assert keygen(55, 5, seed=2) != a


def test_keygen_is_uniform_over_masks():
    # K = 4: 7 nonempty masks over {1, 2, 3}
    counts = {}
    trials = 7000
    for s in range(trials):
        m = keygen(4, 0, seed=s).mask
        counts[m] = counts.get(m, 0) + 1
    assert len(counts) == 7
    _, p = oracles.chi2_p(list(counts.values()), [1 / 7] * 7, trials)
    assert p > 1e-4


@settings(max_examples=60)
@given(st.one_of(keys(), schedules()), st.one_of(st.none(), st.integers(0, 2**64 - 1)))
def test_key_file_round_trip(key, seed):
    if isinstance(key, KeySchedule):
        key = KeySchedule(key.entries, seed)
    else:
        key = EmbedKey(key.geometry, key.mask, seed)
    assert parse_key(format_key(key)) == key


def test_key_file_io(tmp_path):
    key = EmbedKey.scheme2(59, 5, 1, 23, seed=77)
    p = tmp_path / "k.key"
    save_key(key, p)
    assert p.read_text() == "K=59\nG=5\nMASK=1,24\nSEED=77\n"
    assert load_key(p) == key
    assert parse_key("K=10\nMASK=1,2  # comment\n") == EmbedKey(SegmentGeometry(10, 0), (1, 2))


@pytest.mark.parametrize("text, exc", [
    ("K=10\n", KeyFormatError),
    ("K=10\nMASK=a\n", KeyFormatError),
    ("K=10\nK=11\nMASK=1\n", KeyFormatError),
    ("FOO=1\n", KeyFormatError),
    ("junk\n", KeyFormatError),
    ("SCHED=10,0,1\n", KeyFormatError),
    ("K=13\nMASK=1,3,7,10,13\n", InvalidGeometry),
    ("K=5\nG=-5\nMASK=1\n", InvalidGeometry),
])
def test_key_file_errors(text, exc):
    with pytest.raises(exc):
        parse_key(text)


def test_schedule_with_non_increasing_targets():
    sched = KeySchedule(((EmbedKey.scheme1(20, -15), 1), (EmbedKey.scheme1(3, 0), 1)))
    with pytest.raises(InvalidGeometry):
        layout(sched, 200)
