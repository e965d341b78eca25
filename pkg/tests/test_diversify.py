import json

import httpx
import pytest

from pointedit.diversify import (
    BATCH_LIMIT,
    DiversifierClient,
    DiversifyError,
    diversify_instructions,
    offline_paraphrase,
)


class TestOfflineParaphrase:
    def test_template_frame_applied(self):
        variants = offline_paraphrase("make the vase neck longer", seed=0)
        joined = " | ".join(variants)
        assert "vase neck" in joined
        assert "longer" in joined
        # the canonical frame appears for at least one seed
        seen = set()
        for seed in range(20):
            seen.update(offline_paraphrase("make the vase neck longer", seed=seed))
        assert "change the vase neck to be longer" in seen

    def test_deterministic(self):
        a = offline_paraphrase("make the chair legs blue", seed=3)
        b = offline_paraphrase("make the chair legs blue", seed=3)
        assert a == b

    def test_three_distinct(self):
        variants = offline_paraphrase("make the chair legs blue", seed=1)
        assert len(variants) == 3
        assert len(set(variants)) == 3

    def test_multiword_color_splits(self):
        variants = offline_paraphrase("make the chair seat sky blue", seed=0)
        assert all("sky blue" in v for v in variants)
        assert all("chair seat" in v for v in variants)

    def test_unknown_shape_passthrough(self):
        variants = offline_paraphrase("rotate everything by five degrees", seed=0)
        assert len(set(variants)) == 3
        assert all("rotate everything by five degrees" in v for v in variants)

    def test_tokens_preserved(self):
        for v in offline_paraphrase("make the chair legs blue", seed=7):
            assert "legs" in v and "blue" in v


def canned_transport(reply_builder):
    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        prompt = body["messages"][0]["content"]
        lines = [l for l in prompt.splitlines() if l and l[0].isdigit() and ":" in l]
        items = {int(l.split(":", 1)[0]): l.split(":", 1)[1].strip() for l in lines}
        return httpx.Response(200, json={
            "choices": [{"message": {"content": json.dumps(reply_builder(items))}}]
        })
    return httpx.MockTransport(handler)


class TestClient:
    def test_batch_limit(self):
        client = DiversifierClient(endpoint="http://fake")
        with pytest.raises(DiversifyError, match="batch limit 40"):
            client.rewrite_batch(["x"] * (BATCH_LIMIT + 1))
        with pytest.raises(DiversifyError, match="batch limit 40"):
            diversify_instructions(["x"] * 41, None)

    def test_empty_batch(self):
        assert diversify_instructions([], None) == {}

    def test_happy_path(self):
        transport = canned_transport(
            lambda items: {str(i): [f"{t} v1", f"{t} v2", f"{t} v3"] for i, t in items.items()})
        client = DiversifierClient(endpoint="http://fake", transport=transport)
        out = client.rewrite_batch(["make the legs blue", "make the top rounder"])
        assert set(out) == {0, 1}
        assert out[0] == ["make the legs blue v1", "make the legs blue v2", "make the legs blue v3"]

    def test_malformed_entry_falls_back(self):
        # the "seat" instruction returns only two variants every time -> offline fallback
        transport = canned_transport(
            lambda items: {str(i): (["x", "y"] if "seat" in t else [f"{t} a", f"{t} b", f"{t} c"])
                           for i, t in items.items()})
        client = DiversifierClient(endpoint="http://fake", transport=transport)
        out = client.rewrite_batch(["make the legs blue", "make the seat red"])
        assert len(out[0]) == 3 and len(out[1]) == 3
        assert out[1] == offline_paraphrase("make the seat red")

    def test_unreachable_falls_back(self):
        def handler(request):
            raise httpx.ConnectError("no route")
        client = DiversifierClient(endpoint="http://fake",
                                   transport=httpx.MockTransport(handler))
        out = client.rewrite_batch(["make the legs blue"])
        assert out[0] == offline_paraphrase("make the legs blue")

    def test_no_endpoint_uses_offline(self):
        client = DiversifierClient(endpoint="")
        out = diversify_instructions(["make the legs blue"], client)
        assert out[0] == offline_paraphrase("make the legs blue")

    def test_retry_then_success(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] == 1:
                return httpx.Response(500)
            body = json.loads(request.content)
            prompt = body["messages"][0]["content"]
            lines = [l for l in prompt.splitlines() if l and l[0].isdigit() and ":" in l]
            items = {int(l.split(":", 1)[0]): l.split(":", 1)[1].strip() for l in lines}
            return httpx.Response(200, json={"choices": [{"message": {"content": json.dumps(
                {str(i): [f"{t} 1", f"{t} 2", f"{t} 3"] for i, t in items.items()})}}]})

        client = DiversifierClient(endpoint="http://fake",
                                   transport=httpx.MockTransport(handler))
        out = client.rewrite_batch(["make the legs blue"])
        assert calls["n"] == 2
        assert out[0] == ["make the legs blue 1", "make the legs blue 2", "make the legs blue 3"]
