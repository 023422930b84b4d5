import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from components.channel import sample_channel_batch, transmit_batch
from components.lora_modem import ModulationConfig, demod_dft_batch, modulate
from components.stbc import (
    CODE_NAMES,
    CodeEntry,
    StbcCode,
    code_for_antennas,
    code_matrix,
    combine,
    combine_batch,
    derive_combining_plan,
    encode_batch,
    encode_block,
    orthogonality_residual,
)
from utils.errors import ConstructionError, DomainError


class TestCodeEntry:
    @pytest.mark.parametrize("token, text", [("g1", "g1"), ("-g2*", "-g2*"), (" +g3 ", "g3"), ("0", "0")])
    def test_parse_round_trip(self, token, text):
        assert str(CodeEntry.parse(token)) == text

    def test_zero_carries_nothing(self):
        entry = CodeEntry.parse("0")
        assert entry.is_zero
        assert entry.source_index is None and entry.sign == 0 and not entry.conjugated

    @pytest.mark.parametrize("token", ["h1", "g", "g1**", "2g1"])
    def test_parse_rejects(self, token):
        with pytest.raises(ConstructionError):
            CodeEntry.parse(token)


class TestCodeMatrix:
    @pytest.mark.parametrize("name, shape", [
        ("SISO", (1, 1, 1, 1.0, 1)),
        ("G2", (2, 2, 2, 1.0, 1)),
        ("G3", (8, 3, 4, 0.5, 2)),
        ("G4", (8, 4, 4, 0.5, 2)),
    ])
    def test_dimensions(self, name, shape):
        code = code_matrix(name)
        assert (code.slots, code.antennas, code.symbols_per_block, code.rate, code.u_cons) == shape

    def test_g2_entries(self):
        code = code_matrix("G2")
        assert [[str(e) for e in row] for row in code.entries] == [["g1", "g2"], ["-g2*", "g1*"]]

    def test_g3_is_g4_without_last_column(self):
        g3 = code_matrix("G3")
        g4 = code_matrix("G4")
        assert all(row3 == row4[:3] for row3, row4 in zip(g3.entries, g4.entries))

    def test_g4_lower_half_conjugates_upper_half(self):
        g4 = code_matrix("G4")
        for top, bottom in zip(g4.entries[:4], g4.entries[4:]):
            for a, b in zip(top, bottom):
                assert (a.source_index, a.sign) == (b.source_index, b.sign)
                assert not a.conjugated and b.conjugated

    def test_g2_gram(self):
        g = np.array([1 + 2j, 3 - 1j])
        matrix = code_matrix("G2").evaluate(g)
        np.testing.assert_allclose(matrix.conj().T @ matrix, 15 * np.eye(2), atol=1e-12)

    @pytest.mark.parametrize("name", CODE_NAMES)
    def test_orthogonality_random(self, name, rng):
        code = code_matrix(name)
        for _ in range(100):
            g = rng.standard_normal(code.symbols_per_block) + 1j * rng.standard_normal(code.symbols_per_block)
            assert orthogonality_residual(code, g) < 1e-10

    def test_unknown_name(self):
        with pytest.raises(DomainError, match="unknown code"):
            code_matrix("G5")

    @pytest.mark.parametrize("m, name", [(1, "SISO"), (2, "G2"), (3, "G3"), (4, "G4")])
    def test_code_for_antennas(self, m, name):
        assert code_for_antennas(m).name == name

    def test_code_for_antennas_range(self):
        with pytest.raises(DomainError):
            code_for_antennas(5)

    def test_evaluate_symbol_count(self):
        with pytest.raises(DomainError):
            code_matrix("G4").evaluate([1, 2])


class TestCombiningPlan:
    def test_g2_two_term_plan(self):
        plan = derive_combining_plan(code_matrix("G2"))
        assert plan.repetitions == 1
        first = {(t.slot, t.tx_antenna, t.conj_received, t.conj_channel, t.sign) for t in plan.terms[0]}
        # h11* r1 + h21 r2*
        assert first == {(0, 0, False, True, 1), (1, 1, True, False, 1)}
        second = {(t.slot, t.tx_antenna, t.conj_received, t.conj_channel, t.sign) for t in plan.terms[1]}
        assert second == {(0, 1, False, True, 1), (1, 0, True, False, -1)}

    @pytest.mark.parametrize("name, repetitions", [("SISO", 1), ("G2", 1), ("G3", 2), ("G4", 2)])
    def test_repetitions(self, name, repetitions):
        plan = derive_combining_plan(code_matrix(name))
        assert plan.repetitions == repetitions
        assert plan.scale == pytest.approx(1 / np.sqrt(repetitions))

    def test_plan_cached(self):
        code = code_matrix("G4")
        assert derive_combining_plan(code) is derive_combining_plan(code)

    def test_non_orthogonal_rejected(self):
        code = StbcCode.from_rows("bad", [["g1", "g2"], ["g2", "g1"]], 1)
        with pytest.raises(ConstructionError, match="not orthogonal"):
            derive_combining_plan(code)

    def test_zero_entry_is_silent_frame(self, cfg7):
        code = StbcCode.from_rows("diag", [["g1", "0"], ["0", "g1"]], 1)
        tx = encode_block([3], code, cfg7)
        assert not tx[0, 1].any() and not tx[1, 0].any()
        np.testing.assert_allclose(tx[0, 0], modulate(3, cfg7) / np.sqrt(2), atol=1e-12)

    def test_ragged_rows_rejected(self):
        with pytest.raises(ConstructionError):
            StbcCode.from_rows("ragged", [["g1", "g2"], ["g1"]], 1)


class TestEncode:
    def test_g2_table(self, cfg7):
        x1, x2 = modulate(10, cfg7), modulate(99, cfg7)
        tx = encode_block([10, 99], code_matrix("G2"), cfg7) * np.sqrt(2)
        np.testing.assert_allclose(tx[0, 0], x1, atol=1e-12)
        np.testing.assert_allclose(tx[0, 1], x2, atol=1e-12)
        np.testing.assert_allclose(tx[1, 0], -x2.conj(), atol=1e-12)
        np.testing.assert_allclose(tx[1, 1], x1.conj(), atol=1e-12)

    @pytest.mark.parametrize("name", ["G2", "G3", "G4"])
    def test_energy_per_slot(self, name, cfg7):
        code = code_matrix(name)
        tx = encode_block(np.arange(code.symbols_per_block), code, cfg7)
        slot_energy = np.sum(np.abs(tx) ** 2, axis=(1, 2))
        np.testing.assert_allclose(slot_energy, cfg7.symbol_energy, atol=1e-12)

    def test_symbol_count_mismatch(self, cfg7):
        with pytest.raises(DomainError, match="encodes 4 symbols"):
            encode_block([1, 2], code_matrix("G4"), cfg7)


def _noiseless(code_name, n, blocks, rng, cfg):
    code = code_matrix(code_name)
    symbols = rng.integers(0, cfg.chips_per_symbol, size=(blocks, code.symbols_per_block))
    h = sample_channel_batch(blocks, code.antennas, n, rng)
    rx = transmit_batch(encode_batch(symbols, code, cfg), h, 0.0, rng)
    return code, symbols, h, combine_batch(rx, h, derive_combining_plan(code))


class TestCombine:
    @pytest.mark.parametrize("name, n", [("SISO", 1), ("G2", 1), ("G2", 2), ("G3", 1), ("G4", 1), ("G4", 2)])
    def test_perfect_csi_gain(self, name, n, cfg7, rng):
        code, symbols, h, combined = _noiseless(name, n, 20, rng, cfg7)
        x = np.sum(np.abs(h) ** 2, axis=(1, 2))
        scale = x / np.sqrt(code.rate * code.antennas)
        expected = scale[:, None, None] * np.stack(
            [[modulate(int(p), cfg7) for p in row] for row in symbols]
        )
        np.testing.assert_allclose(combined, expected, atol=1e-10)

    def test_g2_two_receivers_matches_written_combination(self, cfg7, rng):
        code = code_matrix("G2")
        h = sample_channel_batch(1, 2, 2, rng)[0]
        rx = rng.standard_normal((2, 2, 128)) + 1j * rng.standard_normal((2, 2, 128))
        combined = combine(rx, h, derive_combining_plan(code))
        r1, r2, r3, r4 = rx[0, 0], rx[1, 0], rx[0, 1], rx[1, 1]
        expected = h[0, 0].conj() * r1 + h[1, 0] * r2.conj() + h[0, 1].conj() * r3 + h[1, 1] * r4.conj()
        np.testing.assert_allclose(combined[0], expected, atol=1e-12)

    @pytest.mark.parametrize("name", ["G2", "G3", "G4"])
    def test_round_trip_decodes_exactly(self, name, cfg7, rng):
        _, symbols, _, combined = _noiseless(name, 1, 1000, rng, cfg7)
        decided, metrics = demod_dft_batch(combined, cfg7)
        np.testing.assert_array_equal(decided, symbols)

    def test_peak_metric_after_combining(self, cfg7, rng):
        code, symbols, h, combined = _noiseless("G2", 2, 5, rng, cfg7)
        _, metrics = demod_dft_batch(combined, cfg7)
        x = np.sum(np.abs(h) ** 2, axis=(1, 2))
        peaks = np.take_along_axis(metrics, symbols[..., None], axis=-1)[..., 0]
        np.testing.assert_allclose(peaks, np.broadcast_to(x[:, None] * np.sqrt(0.5), peaks.shape), rtol=1e-10)

    def test_zero_channel_gives_zero(self, cfg7, rng):
        code = code_matrix("G4")
        tx = encode_block([1, 2, 3, 4], code, cfg7)
        h = np.zeros((4, 1), dtype=complex)
        rx = np.einsum("umk,mn->unk", tx, h)
        assert not combine(rx, h, derive_combining_plan(code)).any()

    def test_noise_only_variance(self, cfg7, rng):
        code = code_matrix("G4")
        plan = derive_combining_plan(code)
        h = sample_channel_batch(1, 4, 1, rng)
        x = float(np.sum(np.abs(h) ** 2))
        n0 = 0.3
        blocks = 800
        noise = np.sqrt(n0 / 2) * (
            rng.standard_normal((blocks, 8, 1, 128)) + 1j * rng.standard_normal((blocks, 8, 1, 128))
        )
        combined = combine_batch(noise, np.broadcast_to(h, (blocks, 4, 1)), plan)
        samples = combined.ravel()
        # the four symbol outputs share their noise, count one sample per chip and block
        bound = 3 * np.sqrt(2 / (blocks * 128))
        assert abs(np.var(samples.real) / (x * n0 / 2) - 1) < bound
        assert abs(np.var(samples.imag) / (x * n0 / 2) - 1) < bound
        assert abs(samples.mean()) < 3 * np.sqrt(x * n0 / samples.size)

    def test_dimension_mismatch(self, rng):
        plan = derive_combining_plan(code_matrix("G2"))
        with pytest.raises(DomainError):
            combine(np.zeros((3, 1, 128)), np.zeros((2, 1)), plan)
        with pytest.raises(DomainError):
            combine(np.zeros((2, 1, 128)), np.zeros((4, 1)), plan)

    @given(g=arrays(np.float64, (2, 4), elements=st.floats(-5, 5, allow_nan=False)))
    @settings(max_examples=60)
    def test_orthogonality_property(self, g):
        code = code_matrix("G4")
        symbols = g[0] + 1j * g[1]
        scale = max(1.0, float(np.sum(np.abs(symbols) ** 2)))
        assert orthogonality_residual(code, symbols) <= 1e-10 * scale


def test_vectorized_matches_single_block(cfg7, rng):
    code = code_matrix("G3")
    plan = derive_combining_plan(code)
    symbols = rng.integers(0, 128, size=(3, 4))
    h = sample_channel_batch(3, 3, 2, rng)
    rx = transmit_batch(encode_batch(symbols, code, cfg7), h, 0.01, rng)
    batch = combine_batch(rx, h, plan)
    np.testing.assert_allclose(batch[1], combine(rx[1], h[1], plan), atol=1e-12)
    np.testing.assert_allclose(encode_batch(symbols, code, cfg7)[2], encode_block(symbols[2], code, cfg7))


def test_sf12_loopback():
    cfg = ModulationConfig(12)
    rng = np.random.default_rng(3)
    _, symbols, _, combined = _noiseless("G2", 1, 4, rng, cfg)
    decided, _ = demod_dft_batch(combined, cfg)
    np.testing.assert_array_equal(decided, symbols)
