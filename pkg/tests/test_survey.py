import itertools
import json
import zipfile
from io import BytesIO

import pytest
from fastapi.testclient import TestClient

from streetgaze.errors import ValidationError
from streetgaze.formats import parse_comparison_log
from streetgaze.gaze import parse_gaze_log
from streetgaze.metrics import group_images
from streetgaze.survey import (
    ConflictError,
    NoMorePairsError,
    NotFoundError,
    StudyConfig,
    SurveyService,
    create_app,
)

IMAGES = [f"img_{k:03d}" for k in range(12)]


def make_service(tmp_path, images=None, clock=None, **kw):
    config = StudyConfig(images=images or IMAGES, seed=7, **kw)
    counter = itertools.count()
    return SurveyService(
        config, tmp_path / "study",
        clock=clock or (lambda: 1000),
        id_factory=lambda: f"id{next(counter):06d}",
    )


def make_client(service, admin_token="secret"):
    app = create_app(service, admin_token=admin_token, export_dir=service.log.dir / "exports")
    return TestClient(app)


DEMO = {"age_band": "25_34", "gender": "female"}


class TestSessions:
    def test_create_session_minimal(self, tmp_path):
        client = make_client(make_service(tmp_path))
        resp = client.post("/sessions", json={"age_band": "18_24"})
        assert resp.status_code == 200
        body = resp.json()
        assert body["pairs_per_session"] == 10
        assert len(body["session_id"]) > 0

    def test_extra_identifying_field_rejected(self, tmp_path):
        client = make_client(make_service(tmp_path))
        resp = client.post("/sessions", json={**DEMO, "email": "x@y.z"})
        assert resp.status_code == 422

    def test_bad_age_band_rejected(self, tmp_path):
        client = make_client(make_service(tmp_path))
        resp = client.post("/sessions", json={"age_band": "immortal"})
        assert resp.status_code == 422

    def test_many_sessions_distinct_ids(self, tmp_path):
        service = make_service(tmp_path)
        ids = {service.create_session(DEMO).session_id for _ in range(127)}
        assert len(ids) == 127


class TestPairScheduling:
    def test_first_pair_has_zero_exposure(self, tmp_path):
        service = make_service(tmp_path)
        s = service.create_session(DEMO)
        before = dict(service.exposure)
        pa = service.next_pair(s.session_id)
        assert before[pa.left_image] == 0 and before[pa.right_image] == 0
        assert pa.left_image != pa.right_image

    def test_eleventh_call_rejected(self, tmp_path):
        service = make_service(tmp_path)
        s = service.create_session(DEMO)
        for _ in range(10):
            service.next_pair(s.session_id)
        with pytest.raises(NoMorePairsError):
            service.next_pair(s.session_id)

    def test_unknown_session(self, tmp_path):
        service = make_service(tmp_path)
        with pytest.raises(NotFoundError):
            service.next_pair("ghost")

    def test_no_repeated_unordered_pair_within_session(self, tmp_path):
        service = make_service(tmp_path, images=IMAGES[:6], pairs_per_session=10)
        s = service.create_session(DEMO)
        seen = set()
        for _ in range(10):
            pa = service.next_pair(s.session_id)
            key = frozenset((pa.left_image, pa.right_image))
            assert key not in seen
            seen.add(key)

    def test_exposure_balance_small_simulation(self, tmp_path):
        service = make_service(tmp_path, images=[f"i{k}" for k in range(40)])
        for _ in range(30):
            s = service.create_session(DEMO)
            for _ in range(10):
                pa = service.next_pair(s.session_id)
                service.record_choice(s.session_id, pa.pair_id, "left")
        spread = max(service.exposure.values()) - min(service.exposure.values())
        assert spread <= 2

    def test_http_pair_payload(self, tmp_path):
        client = make_client(make_service(tmp_path))
        sid = client.post("/sessions", json=DEMO).json()["session_id"]
        resp = client.get(f"/sessions/{sid}/pair")
        assert resp.status_code == 200
        body = resp.json()
        assert body["left_url"] == f"/images/{body['left_image']}"
        assert body["index"] == 1 and body["total"] == 10

    def test_uniform_scheduler_switch(self, tmp_path):
        service = make_service(tmp_path, scheduler="uniform")
        s = service.create_session(DEMO)
        pa = service.next_pair(s.session_id)
        assert pa.left_image != pa.right_image


class TestChoices:
    def serve_one(self, service):
        s = service.create_session(DEMO)
        pa = service.next_pair(s.session_id)
        return s, pa

    def test_first_answer_persisted(self, tmp_path):
        service = make_service(tmp_path)
        s, pa = self.serve_one(service)
        rec = service.record_choice(s.session_id, pa.pair_id, "left")
        assert rec.chosen_image == pa.left_image
        assert (s.session_id, pa.pair_id) in service.choices

    def test_double_answer_conflicts(self, tmp_path):
        service = make_service(tmp_path)
        s, pa = self.serve_one(service)
        service.record_choice(s.session_id, pa.pair_id, "left")
        with pytest.raises(ConflictError):
            service.record_choice(s.session_id, pa.pair_id, "right")

    def test_same_answer_idempotent(self, tmp_path):
        service = make_service(tmp_path)
        s, pa = self.serve_one(service)
        first = service.record_choice(s.session_id, pa.pair_id, "left")
        again = service.record_choice(s.session_id, pa.pair_id, "left")
        assert first == again
        assert len(service.choices) == 1

    def test_unknown_pair(self, tmp_path):
        service = make_service(tmp_path)
        s, _ = self.serve_one(service)
        with pytest.raises(NotFoundError):
            service.record_choice(s.session_id, "nope", "left")

    def test_http_conflict_code(self, tmp_path):
        client = make_client(make_service(tmp_path))
        sid = client.post("/sessions", json=DEMO).json()["session_id"]
        pair = client.get(f"/sessions/{sid}/pair").json()
        ok = client.post(f"/sessions/{sid}/choice",
                         json={"pair_id": pair["pair_id"], "chosen": "left"})
        assert ok.status_code == 200
        dup = client.post(f"/sessions/{sid}/choice",
                          json={"pair_id": pair["pair_id"], "chosen": "right"})
        assert dup.status_code == 409

    def test_session_completes_after_all_answers(self, tmp_path):
        service = make_service(tmp_path, pairs_per_session=2)
        s = service.create_session(DEMO)
        for _ in range(2):
            pa = service.next_pair(s.session_id)
            service.record_choice(s.session_id, pa.pair_id, "right")
        assert service.sessions[s.session_id].state == "complete"


class TestDurability:
    def test_acknowledged_choice_survives_restart(self, tmp_path):
        service = make_service(tmp_path)
        s, pa = TestChoices().serve_one(service)
        service.record_choice(s.session_id, pa.pair_id, "left")
        service.log.close()  # hard stop; no clean shutdown logic
        reborn = SurveyService(service.config, tmp_path / "study", clock=lambda: 1000)
        assert (s.session_id, pa.pair_id) in reborn.choices
        assert reborn.exposure == service.exposure
        assert reborn.serve_counter == service.serve_counter

    def test_crash_between_append_and_ack_is_idempotent(self, tmp_path):
        service = make_service(tmp_path)
        s, pa = TestChoices().serve_one(service)
        # simulate crash after the durable append but before the ack reaches
        # the client: write the event, drop the process state
        service.log.append({
            "type": "choice", "pair_id": pa.pair_id,
            "session_id": s.session_id, "chosen": "left", "at_ms": 1000,
        })
        service.log.close()
        reborn = SurveyService(service.config, tmp_path / "study", clock=lambda: 1000)
        # client never got an ack and retries the identical request
        rec = reborn.record_choice(s.session_id, pa.pair_id, "left")
        assert rec.chosen == "left"
        assert len(reborn.choices) == 1
        assert reborn.log.event_count == 3  # no duplicate appended

    def test_torn_final_line_ignored(self, tmp_path):
        service = make_service(tmp_path)
        s, pa = TestChoices().serve_one(service)
        service.log.close()
        with open(tmp_path / "study" / "events.log", "a") as fh:
            fh.write('{"type": "choice", "pair_id"')  # torn write
        reborn = SurveyService(service.config, tmp_path / "study", clock=lambda: 1000)
        assert len(reborn.choices) == 0
        assert reborn.sessions[s.session_id].pairs_served == 1

    def test_snapshot_plus_tail_matches_full_replay(self, tmp_path):
        service = make_service(tmp_path)
        s = service.create_session(DEMO)
        for _ in range(3):
            pa = service.next_pair(s.session_id)
            service.record_choice(s.session_id, pa.pair_id, "left")
        service.snapshot()
        pa = service.next_pair(s.session_id)
        service.record_choice(s.session_id, pa.pair_id, "right")
        service.log.close()

        reborn = SurveyService(service.config, tmp_path / "study", clock=lambda: 1000)
        assert len(reborn.choices) == 4
        assert reborn.exposure == service.exposure
        assert reborn.sessions[s.session_id].served_pairs == \
            service.sessions[s.session_id].served_pairs


class TestGaze:
    def batch(self, n, t0=0, image="img_000"):
        return {
            "image_id": image,
            "samples": [
                {"t_ms": t0 + k * 16, "x_px": 10.0 + k, "y_px": 20.0, "valid": True}
                for k in range(n)
            ],
        }

    def test_accepts_batch(self, tmp_path):
        client = make_client(make_service(tmp_path))
        sid = client.post("/sessions", json=DEMO).json()["session_id"]
        resp = client.post(f"/sessions/{sid}/gaze", json=self.batch(120))
        assert resp.status_code == 200
        assert resp.json()["accepted"] == 120

    def test_empty_batch_ok(self, tmp_path):
        client = make_client(make_service(tmp_path))
        sid = client.post("/sessions", json=DEMO).json()["session_id"]
        resp = client.post(f"/sessions/{sid}/gaze",
                           json={"image_id": "img_000", "samples": []})
        assert resp.status_code == 200 and resp.json()["accepted"] == 0

    def test_batch_cap(self, tmp_path):
        service = make_service(tmp_path, gaze_batch_cap=50)
        client = make_client(service)
        sid = client.post("/sessions", json=DEMO).json()["session_id"]
        resp = client.post(f"/sessions/{sid}/gaze", json=self.batch(51))
        assert resp.status_code == 413

    def test_unknown_session(self, tmp_path):
        client = make_client(make_service(tmp_path))
        resp = client.post("/sessions/ghost/gaze", json=self.batch(1))
        assert resp.status_code == 404

    def test_interleaved_batches_per_image_sorted(self, tmp_path):
        service = make_service(tmp_path)
        s = service.create_session(DEMO)
        for t0, image in [(0, "img_000"), (0, "img_001"), (320, "img_000"), (320, "img_001")]:
            service.record_gaze_batch(s.session_id, image,
                                      self.batch(20, t0=t0, image=image)["samples"])
        gaze_file = service.log.gaze_dir() / f"{s.session_id}.jsonl"
        samples, diags = parse_gaze_log(gaze_file.read_bytes())
        assert diags == []
        per_image = {}
        for sm in samples:
            per_image.setdefault(sm.image_id, []).append(sm.t_ms)
        assert len(per_image) == 2
        for ts in per_image.values():
            assert ts == sorted(ts) and len(ts) == 40


class TestExport:
    def test_empty_study_emits_valid_files(self, tmp_path):
        service = make_service(tmp_path)
        files = service.export_logs(tmp_path / "exp")
        assert "comparisons.jsonl" in files
        assert "sessions.jsonl" in files
        assert (tmp_path / "exp" / "comparisons.jsonl").read_text() == ""
        assert parse_comparison_log("") == []

    def test_choice_count_matches(self, tmp_path):
        service = make_service(tmp_path)
        n = 0
        for _ in range(3):
            s = service.create_session(DEMO)
            for _ in range(4):
                pa = service.next_pair(s.session_id)
                service.record_choice(s.session_id, pa.pair_id, "left")
                n += 1
        service.export_logs(tmp_path / "exp")
        records = parse_comparison_log((tmp_path / "exp" / "comparisons.jsonl").read_bytes())
        assert len(records) == n

    def test_export_reingest_roundtrip(self, tmp_path):
        service = make_service(tmp_path)
        s = service.create_session(DEMO)
        for _ in range(5):
            pa = service.next_pair(s.session_id)
            service.record_choice(s.session_id, pa.pair_id, "right")
        service.record_gaze_batch(s.session_id, "img_000", [
            {"t_ms": k * 16, "x_px": 1.0 * k, "y_px": 2.0, "valid": True}
            for k in range(30)
        ])
        service.export_logs(tmp_path / "exp")

        records = parse_comparison_log((tmp_path / "exp" / "comparisons.jsonl").read_bytes())
        assert records == service.comparison_records()
        labels = group_images(records)
        assert labels == group_images(service.comparison_records())

        gaze_text = (tmp_path / "exp" / "gaze" / f"{s.session_id}.jsonl").read_bytes()
        samples, diags = parse_gaze_log(gaze_text, strict=True)
        assert len(samples) == 30

    def test_http_export_token_gated(self, tmp_path):
        service = make_service(tmp_path)
        client = make_client(service, admin_token="tok")
        assert client.get("/export").status_code == 403
        resp = client.get("/export", headers={"X-Admin-Token": "tok"})
        assert resp.status_code == 200
        zf = zipfile.ZipFile(BytesIO(resp.content))
        assert "comparisons.jsonl" in zf.namelist()

    def test_abandoned_sessions_excluded(self, tmp_path):
        now = [0]
        service = make_service(tmp_path, clock=lambda: now[0], abandon_ttl_ms=100)
        s1 = service.create_session(DEMO)
        pa = service.next_pair(s1.session_id)
        service.record_choice(s1.session_id, pa.pair_id, "left")
        now[0] = 10_000  # long silence
        assert service.sweep_abandoned() == 1
        assert service.sessions[s1.session_id].state == "abandoned"
        service.export_logs(tmp_path / "exp")
        assert (tmp_path / "exp" / "comparisons.jsonl").read_text() == ""
        manifest = (tmp_path / "exp" / "sessions.jsonl").read_text().strip()
        assert json.loads(manifest)["state"] == "abandoned"


class TestConfig:
    def test_empty_manifest_rejected(self):
        with pytest.raises(ValidationError):
            StudyConfig(images=[])

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError):
            StudyConfig(images=["a", "a"])

    def test_config_file_with_env_overrides(self, tmp_path, monkeypatch):
        from streetgaze.survey import load_service_config

        manifest = tmp_path / "m.csv"
        manifest.write_text("image_id,stratum\nimg_a,high\nimg_b,low\n")
        cfg_file = tmp_path / "svc.yaml"
        cfg_file.write_text(
            f"manifest_path: {manifest}\nport: 8100\nseed: 3\nadmin_token: abc\n"
        )
        monkeypatch.setenv("STREETGAZE_PORT", "9200")
        monkeypatch.setenv("STREETGAZE_SEED", "11")
        cfg = load_service_config(cfg_file)
        assert cfg.port == 9200 and cfg.seed == 11
        assert cfg.admin_token == "abc"

    def test_manifest_loader(self, tmp_path):
        from streetgaze.survey import load_manifest

        path = tmp_path / "m.csv"
        path.write_text("image_id,stratum\na,high\nb,\nc,low\n")
        images, strata = load_manifest(path)
        assert images == ["a", "b", "c"]
        assert strata == {"a": "high", "c": "low"}
