"""Codec, sample validation, and JSONL round-trip tests."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualdenoise.data import (AspectAnnotation, Dataset, Polarity,
                              decode_target, encode_target,
                              load_dataset, output_vocab_size, samples_equal,
                              save_dataset, validate_sample)
from dualdenoise.errors import ContractError, DatasetFormatError, DecodeError

from conftest import make_sample


class TestCodec:
    def test_single_positive_aspect(self):
        aspects = [AspectAnnotation(1, 2, Polarity.POSITIVE)]
        assert encode_target(aspects, 5) == [1, 2, 5, 8]

    def test_empty_aspect_list(self):
        assert encode_target([], 4) == [7]

    def test_two_aspects(self):
        aspects = [AspectAnnotation(0, 0, Polarity.NEGATIVE),
                   AspectAnnotation(3, 4, Polarity.NEUTRAL)]
        assert encode_target(aspects, 6) == [0, 0, 8, 3, 4, 7, 9]

    def test_out_of_range_span(self):
        with pytest.raises(ContractError, match="out of range"):
            encode_target([AspectAnnotation(3, 5, Polarity.NEUTRAL)], 5)

    def test_decode_inverse_of_encode_example(self):
        assert decode_target([1, 2, 5, 8], 5) == \
            [AspectAnnotation(1, 2, Polarity.POSITIVE)]

    def test_decode_end_before_begin(self):
        with pytest.raises(DecodeError, match="end 1 before begin 2"):
            decode_target([2, 1, 5, 8], 5)

    def test_decode_polarity_where_position_expected(self):
        with pytest.raises(DecodeError, match="expected a position"):
            decode_target([0, 6, 5, 8], 5)  # 6 is a polarity code for n=5

    def test_decode_missing_eos(self):
        with pytest.raises(DecodeError, match="without EOS"):
            decode_target([1, 2, 5], 5)

    def test_decode_truncated_triple(self):
        with pytest.raises(DecodeError, match="truncated"):
            decode_target([1, 2], 5)

    def test_vocab_size(self):
        assert output_vocab_size(6) == 10


@st.composite
def aspect_lists(draw):
    n = draw(st.integers(min_value=1, max_value=30))
    count = draw(st.integers(min_value=0, max_value=5))
    cuts = draw(st.lists(st.integers(min_value=0, max_value=n - 1),
                         min_size=2 * count, max_size=2 * count))
    cuts = sorted(cuts)
    aspects = []
    prev_end = -1
    for i in range(count):
        b, e = cuts[2 * i], cuts[2 * i + 1]
        if b <= prev_end:
            continue
        pol = draw(st.sampled_from(list(Polarity)))
        aspects.append(AspectAnnotation(b, e, pol))
        prev_end = e
    return aspects, n


class TestCodecRoundTrip:
    @settings(max_examples=1000, deadline=None)
    @given(aspect_lists())
    def test_decode_encode_identity(self, case):
        aspects, n = case
        assert decode_target(encode_target(aspects, n), n) == aspects


class TestValidateSample:
    def test_well_formed(self):
        assert validate_sample(make_sample()) == []

    def test_asymmetric_dep_dist(self):
        s = make_sample()
        s.dep_dist = s.dep_dist.copy()
        s.dep_dist[0, 1] = 7
        violations = validate_sample(s)
        assert any("not symmetric at (0, 1)" in v for v in violations)

    def test_sentic_out_of_range(self):
        s = make_sample(sentic=np.array([0.0, 1.5, 0.0, 0.0]))
        violations = validate_sample(s)
        assert any("sentic out of range at token 1" in v for v in violations)

    def test_reports_all_violations(self):
        s = make_sample(sentic=np.array([0.0, 1.5, 0.0, 0.0]),
                        noun_flags=[True])
        assert len(validate_sample(s)) >= 2

    def test_overlapping_aspects(self):
        s = make_sample(aspects=[AspectAnnotation(0, 2, Polarity.POSITIVE),
                                 AspectAnnotation(1, 3, Polarity.NEUTRAL)])
        assert any("overlap" in v for v in validate_sample(s))

    def test_nonfinite_feature(self):
        s = make_sample(text_embed=np.array([np.inf, 0, 0, 0, 0]))
        assert any("non-finite" in v for v in validate_sample(s))


class TestDatasetIO:
    def _dataset(self):
        rng = np.random.default_rng(0)
        samples = []
        for i in range(3):
            samples.append(make_sample(
                sid=f"s{i}",
                image_blocks=rng.normal(size=(2, 3)),
                text_embed=rng.normal(size=5),
                image_embed=rng.normal(size=5),
                sentic=rng.uniform(-1, 1, size=4),
                noise_flag=bool(i % 2) if i < 2 else None,
            ))
        return Dataset(samples)

    def test_round_trip_is_identity(self, tmp_path):
        ds = self._dataset()
        path = tmp_path / "data.jsonl"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert len(loaded) == len(ds)
        for a, b in zip(ds.samples, loaded.samples):
            assert samples_equal(a, b)

    def test_round_trip_preserves_floats_bit_exactly(self, tmp_path):
        s = make_sample(text_embed=np.array([0.1, 1 / 3, np.pi, 1e-300, 123456.789]))
        path = tmp_path / "data.jsonl"
        save_dataset(Dataset([s]), path)
        loaded = load_dataset(path)
        assert loaded.samples[0].text_embed.tobytes() == s.text_embed.tobytes()

    def test_empty_file_is_valid_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        ds = load_dataset(path)
        assert len(ds) == 0
        assert ds.dims is None

    def test_missing_field_names_line(self, tmp_path):
        ds = self._dataset()
        path = tmp_path / "data.jsonl"
        save_dataset(ds, path)
        lines = path.read_text().splitlines()
        rec = json.loads(lines[1])
        del rec["sentic"]
        lines[1] = json.dumps(rec)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DatasetFormatError, match="line 2.*sentic"):
            load_dataset(path)

    def test_mismatched_image_dims_names_both(self, tmp_path):
        ds = self._dataset()
        ds.samples[2] = make_sample(sid="s2", image_blocks=np.ones((2, 4)))
        path = tmp_path / "data.jsonl"
        save_dataset(ds, path)
        with pytest.raises(DatasetFormatError, match=r"line 3.*\(4, 5\).*\(3, 5\)"):
            load_dataset(path)

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a"}\nnot json\n')
        with pytest.raises(DatasetFormatError, match="line 1|line 2"):
            load_dataset(path)

    def test_duplicate_ids_rejected(self, tmp_path):
        s = make_sample()
        path = tmp_path / "dup.jsonl"
        save_dataset(Dataset([s, s]), path)
        with pytest.raises(DatasetFormatError, match="duplicate"):
            load_dataset(path)

    def test_polarity_serialized_as_codes(self, tmp_path):
        path = tmp_path / "data.jsonl"
        save_dataset(Dataset([make_sample()]), path)
        rec = json.loads(path.read_text().splitlines()[0])
        assert rec["aspects"] == [{"begin": 1, "end": 1, "polarity": 0}]
