import numpy as np
import pytest

from pointedit.text_encoder import (
    EncoderError,
    HashedTextEncoder,
    PrecomputedEncoder,
    cosine,
    read_embeddings,
    write_embeddings,
)


class TestHashedEncoder:
    def test_deterministic(self):
        enc = HashedTextEncoder()
        a = enc.encode("make the chair legs blue")
        b = enc.encode("make the chair legs blue")
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        enc = HashedTextEncoder()
        rng = np.random.default_rng(0)
        words = ["chair", "legs", "blue", "vase", "neck", "longer", "table", "top"]
        for _ in range(100):
            text = " ".join(rng.choice(words, size=rng.integers(1, 6)))
            v = enc.encode(text)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)

    def test_related_instructions_more_similar(self):
        enc = HashedTextEncoder()
        a = enc.encode("make the legs blue")
        b = enc.encode("make the legs red")
        c = enc.encode("shorten the neck")
        assert cosine(a, b) > cosine(a, c)

    def test_empty_errors(self):
        enc = HashedTextEncoder()
        with pytest.raises(EncoderError):
            enc.encode("   ")

    def test_punctuation_only_still_encodes(self):
        v = HashedTextEncoder().encode("?!")
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)

    def test_cosine_range_and_symmetry(self):
        enc = HashedTextEncoder()
        a = enc.encode("make the table top rounder")
        b = enc.encode("give the table four legs")
        assert -1 <= cosine(a, b) <= 1
        assert cosine(a, b) == pytest.approx(cosine(b, a))

    def test_collision_rate_below_5_percent(self):
        # exact-vector collisions over a template-style instruction corpus
        enc = HashedTextEncoder(64)
        parts = ["chair legs", "chair seat", "chair backrest", "vase neck", "vase body",
                 "table top", "table legs", "chair armrests"]
        colors = ["blue", "red", "green", "golden", "sky blue", "gray", "white", "black"]
        comps = ["longer", "shorter", "thicker", "thinner", "taller", "wider", "rounder"]
        corpus = [f"make the {p} {c}" for p in parts for c in colors]
        corpus += [f"make the {p} {c}" for p in parts for c in comps]
        vecs = {}
        collisions = 0
        for text in corpus:
            key = tuple(np.round(enc.encode(text), 12))
            if key in vecs and vecs[key] != text:
                collisions += 1
            vecs[key] = text
        assert collisions / len(corpus) < 0.05


class TestPrecomputed:
    def test_roundtrip_and_lookup(self, tmp_path):
        table = {"make the legs blue": np.arange(8, dtype=np.float32),
                 "make the legs red": np.ones(8, dtype=np.float32)}
        path = tmp_path / "emb.bin"
        write_embeddings(table, path)
        back = read_embeddings(path)
        assert set(back) == set(table)
        for k in table:
            assert np.array_equal(back[k], table[k])
        enc = PrecomputedEncoder(path, fallback=HashedTextEncoder(8))
        assert np.allclose(enc.encode("make the legs blue"), table["make the legs blue"])

    def test_miss_falls_back_same_dim(self, tmp_path):
        path = tmp_path / "emb.bin"
        write_embeddings({"hello": np.zeros(16, dtype=np.float32)}, path)
        enc = PrecomputedEncoder(path, fallback=HashedTextEncoder(16))
        v = enc.encode("unseen instruction")
        assert v.shape == (16,)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-6)

    def test_mixed_dims_rejected(self, tmp_path):
        import struct

        path = tmp_path / "emb.bin"
        # a file whose records disagree with the header dim cannot parse
        with open(path, "wb") as f:
            f.write(b"EMB1")
            f.write(struct.pack("<I", 64))
            for text, dim in (("a", 64), ("b", 768)):
                raw = text.encode()
                f.write(struct.pack("<H", len(raw)))
                f.write(raw)
                f.write(np.random.default_rng(0).random(dim).astype("<f4").tobytes())
        with pytest.raises(EncoderError):
            PrecomputedEncoder(path, fallback=HashedTextEncoder(64))

    def test_fallback_dim_must_match_file(self, tmp_path):
        path = tmp_path / "emb.bin"
        write_embeddings({"a": np.zeros(4, dtype=np.float32)}, path)
        with pytest.raises(EncoderError):
            PrecomputedEncoder(path, fallback=HashedTextEncoder(64))

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "emb.bin"
        write_embeddings({"hello": np.zeros(16, dtype=np.float32)}, path)
        path.write_bytes(path.read_bytes()[:-7])
        with pytest.raises(EncoderError, match="truncated"):
            read_embeddings(path)
