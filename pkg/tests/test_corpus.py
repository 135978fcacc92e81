import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diarkit.corpus import (
    EmbeddingSet,
    Manifest,
    ManifestEntry,
    Timeline,
    Trial,
    Turn,
    expand_speed_perturb,
    load_embedding_archive,
    parse_manifest,
    parse_rttm,
    parse_trials,
    save_embedding_archive,
    write_manifest,
    write_rttm,
)
from diarkit.errors import (
    DuplicateIdError,
    FormatError,
    ParseError,
    StateError,
    TruncationError,
)


def make_set(ids, rows):
    return EmbeddingSet(ids=ids, vectors=np.array(rows, dtype=np.float32))


class TestEmbeddingArchive:
    def test_roundtrip_identity(self, tmp_path):
        original = make_set(["a", "b"], [[1.0, 2.0], [3.5, -0.25]])
        path = tmp_path / "x.emb1"
        save_embedding_archive(path, original)
        assert load_embedding_archive(path) == original

    def test_byte_layout(self, tmp_path):
        path = tmp_path / "one.emb1"
        save_embedding_archive(path, make_set(["a"], [[1.0, 2.0]]))
        data = path.read_bytes()
        # 12 header bytes, 2+1 id bytes, 8 vector bytes
        assert len(data) == 12 + 3 + 8
        assert data[:4] == b"EMB1"
        assert struct.unpack_from("<II", data, 4) == (1, 2)
        assert struct.unpack_from("<H", data, 12) == (1,)
        assert data[14:15] == b"a"
        assert struct.unpack_from("<2f", data, 15) == (1.0, 2.0)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb1"
        path.write_bytes(b"XXXX" + b"\x00" * 8)
        with pytest.raises(FormatError):
            load_embedding_archive(path)

    def test_truncated_record(self, tmp_path):
        path = tmp_path / "trunc.emb1"
        save_embedding_archive(path, make_set(["ab"], [[1.0, 2.0]]))
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(TruncationError):
            load_embedding_archive(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "dup.emb1"
        body = struct.pack("<H", 1) + b"a" + struct.pack("<f", 0.5)
        path.write_bytes(b"EMB1" + struct.pack("<II", 2, 1) + body + body)
        with pytest.raises(DuplicateIdError):
            load_embedding_archive(path)

    def test_unicode_ids(self, tmp_path):
        original = make_set(["υtt-1", "录音"], [[0.5], [1.5]])
        path = tmp_path / "u.emb1"
        save_embedding_archive(path, original)
        assert load_embedding_archive(path).ids == ["υtt-1", "录音"]

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.text(min_size=1, max_size=12), min_size=1, max_size=8, unique=True
        ),
        st.integers(min_value=1, max_value=6),
        st.randoms(use_true_random=False),
    )
    def test_roundtrip_property(self, ids, dim, rnd, tmp_path_factory):
        rows = [[rnd.uniform(-10, 10) for _ in range(dim)] for _ in ids]
        original = make_set(ids, rows)
        path = tmp_path_factory.mktemp("emb") / "p.emb1"
        save_embedding_archive(path, original)
        assert load_embedding_archive(path) == original


class TestRttm:
    def test_parse_single_row(self):
        turns = parse_rttm("SPEAKER rec1 1 0.000 5.000 <NA> <NA> spkA <NA> <NA>")
        assert turns == [Turn("rec1", 0.0, 5.0, "spkA")]

    def test_empty_input(self):
        assert parse_rttm("") == []
        assert write_rttm([]) == ""

    def test_out_of_order_rows_sorted(self):
        text = (
            "SPEAKER r 1 7.000 1.000 <NA> <NA> b <NA> <NA>\n"
            "SPEAKER r 1 2.000 1.000 <NA> <NA> a <NA> <NA>\n"
        )
        turns = parse_rttm(text)
        assert [t.onset for t in turns] == [2.0, 7.0]

    def test_roundtrip(self):
        turns = [
            Turn("recB", 1.25, 3.5, "s1"),
            Turn("recA", 0.01, 0.5, "s2"),
            Turn("recA", 12.333, 4.007, "s1"),
        ]
        assert parse_rttm(write_rttm(turns)) == sorted(
            turns, key=lambda t: (t.recording, t.onset, t.speaker)
        )

    def test_non_numeric_raises_with_line(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_rttm(
                "SPEAKER r 1 0.0 1.0 <NA> <NA> a <NA> <NA>\n"
                "SPEAKER r 1 x 1.0 <NA> <NA> a <NA> <NA>\n"
            )

    def test_nonpositive_duration(self):
        with pytest.raises(ValueError):
            parse_rttm("SPEAKER r 1 0.0 0.000 <NA> <NA> a <NA> <NA>")

    def test_short_row_rejected(self):
        with pytest.raises(ParseError):
            parse_rttm("SPEAKER r 1 0.0 1.0 <NA> <NA>")

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(
            st.tuples(
                st.sampled_from(["r1", "r2"]),
                st.integers(0, 5000),
                st.integers(1, 2000),
                st.sampled_from(["a", "b", "c"]),
            ),
            min_size=1,
            max_size=10,
        )
    )
    def test_roundtrip_property(self, rows):
        # onsets/durations on the 3-decimal grid the format guarantees
        turns = [Turn(r, o / 1000.0, d / 1000.0, s) for r, o, d, s in rows]
        expect = sorted(turns, key=lambda t: (t.recording, t.onset, t.speaker))
        got = parse_rttm(write_rttm(turns))
        assert len(got) == len(expect)
        for g, e in zip(got, expect):
            assert g.recording == e.recording and g.speaker == e.speaker
            assert g.onset == pytest.approx(e.onset, abs=5e-4)
            assert g.duration == pytest.approx(e.duration, abs=5e-4)


class TestTrials:
    def test_labeled(self):
        assert parse_trials("1 a.wav b.wav") == [Trial("a.wav", "b.wav", True)]
        assert parse_trials("0 a.wav b.wav") == [Trial("a.wav", "b.wav", False)]

    def test_unlabeled(self):
        assert parse_trials("a.wav b.wav") == [Trial("a.wav", "b.wav", None)]

    def test_order_preserved(self):
        text = "\n".join(f"e{i} t{i}" for i in range(20))
        trials = parse_trials(text)
        assert [t.enroll for t in trials] == [f"e{i}" for i in range(20)]

    def test_mixed_forms_rejected(self):
        with pytest.raises(FormatError):
            parse_trials("1 a b\nc d")

    def test_bad_label(self):
        with pytest.raises(ParseError):
            parse_trials("2 a b")

    def test_line_count_preserved(self):
        n = 37_720 // 10  # scaled-down bulk check; full scale in acceptance
        text = "".join(f"1 e{i} t{i}\n" for i in range(n))
        assert len(parse_trials(text)) == n


class TestManifest:
    def test_expand_counts(self):
        m = Manifest([ManifestEntry("u1", "s1"), ManifestEntry("u2", "s1")])
        out = expand_speed_perturb(m)
        assert len(out) == 6
        assert len(out.speakers()) == 3

    def test_expand_empty(self):
        assert len(expand_speed_perturb(Manifest([]))) == 0

    def test_expand_already_expanded(self):
        m = Manifest([ManifestEntry("u1", "s1", None, 0.9)])
        with pytest.raises(StateError):
            expand_speed_perturb(m)

    def test_expand_suffixes(self):
        m = Manifest([ManifestEntry("u1", "s1", "v1")])
        out = expand_speed_perturb(m)
        assert out.entries[1] == ManifestEntry("u1#0.9", "s1#0.9", "v1", 0.9)
        assert out.entries[2] == ManifestEntry("u1#1.1", "s1#1.1", "v1", 1.1)

    def test_expand_unshared_videos(self):
        m = Manifest([ManifestEntry("u1", "s1", "v1")])
        out = expand_speed_perturb(m, shared_videos=False)
        assert out.entries[1].video == "v1#0.9"

    def test_expand_preserves_per_speaker_counts(self):
        m = Manifest(
            [ManifestEntry(f"u{i}", f"s{i % 3}", f"v{i}") for i in range(9)]
        )
        out = expand_speed_perturb(m)
        for tag in (1.0, 0.9, 1.1):
            per_spk = {}
            for e in out.entries:
                if e.speed == tag:
                    per_spk[e.speaker] = per_spk.get(e.speaker, 0) + 1
            assert sorted(per_spk.values()) == [3, 3, 3]

    def test_file_roundtrip(self):
        m = Manifest(
            [
                ManifestEntry("u1", "s1", "v1", 1.0),
                ManifestEntry("u2", "s2", None, 1.0),
            ]
        )
        assert parse_manifest(write_manifest(m)) == m

    def test_duplicate_utterance_rejected(self):
        with pytest.raises(DuplicateIdError):
            parse_manifest("u1 s1\nu1 s2")


class TestTimelineType:
    def test_merges_touching(self):
        tl = Timeline("r", ((0.0, 1.0), (1.0, 2.0), (3.0, 4.0)))
        assert tl.intervals == ((0.0, 2.0), (3.0, 4.0))

    def test_sorts_and_merges_overlap(self):
        tl = Timeline("r", ((2.0, 4.0), (0.0, 2.5)))
        assert tl.intervals == ((0.0, 4.0),)

    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            Timeline("r", ((1.0, 1.0),))

    def test_duration(self):
        assert Timeline("r", ((0.0, 1.5), (2.0, 3.0))).duration() == 2.5
