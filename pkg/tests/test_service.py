import pytest
from fastapi.testclient import TestClient

from nephroscope.service import create_app

EDGE_CASE_HEALTHY = {
    "gender": 0, "age": 25, "DM": 0, "CHD": 0, "Vascular_disease": 0,
    "smoking": 0, "HT": 0, "DLP": 0, "Obesity": 0, "DLP_meds": 0,
    "DM_meds": 0, "HT_meds": 0, "ACEI_ARB": 0, "Chol": 3.1, "TG": 0.68,
    "HbA1C": 5, "Cr": 61, "eGFR": 123, "SBP": 120, "DBP": 80, "BMI": 19,
}


@pytest.fixture(scope="module")
def client(artifacts_dir):
    app = create_app(
        model_path=artifacts_dir / "model.json", pool_path=artifacts_dir / "pool.csv"
    )
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def bare_client():
    with TestClient(create_app()) as c:
        yield c


class TestHealthMeta:
    def test_health(self, client):
        r = client.get("/health")
        assert r.status_code == 200 and r.text == "ok"

    def test_meta_carries_schema_and_threshold(self, client):
        meta = client.get("/meta").json()
        assert len(meta["schema"]["features"]) == 21
        assert 0 <= meta["threshold"] <= 1
        assert meta["class_names"] == ["noCKD", "CKD"]
        assert meta["pool_size"] == 491


class TestPredict:
    def test_healthy_case_predicts_no_ckd(self, client):
        r = client.post("/predict", json=EDGE_CASE_HEALTHY)
        assert r.status_code == 200
        body = r.json()
        assert body["predicted_class"] == "noCKD"
        assert 0 <= body["probability_ckd"] <= 1

    def test_bad_binary_value_names_field(self, client):
        payload = dict(EDGE_CASE_HEALTHY, gender=2)
        r = client.post("/predict", json=payload)
        assert r.status_code == 400
        assert r.json()["field"] == "gender"

    def test_missing_feature_names_field(self, client):
        payload = dict(EDGE_CASE_HEALTHY)
        payload.pop("BMI")
        r = client.post("/predict", json=payload)
        assert r.status_code == 400
        assert r.json()["field"] == "BMI"

    def test_unknown_feature_rejected(self, client):
        payload = dict(EDGE_CASE_HEALTHY, bogus=1)
        r = client.post("/predict", json=payload)
        assert r.status_code == 400
        assert r.json()["field"] == "bogus"

    def test_out_of_range_warns_but_predicts(self, client):
        payload = dict(EDGE_CASE_HEALTHY, eGFR=400)
        r = client.post("/predict", json=payload)
        assert r.status_code == 422
        body = r.json()
        assert "probability_ckd" in body
        assert body["warnings"][0]["feature"] == "eGFR"

    def test_identical_bodies_identical_responses(self, client):
        r1 = client.post("/predict", json=EDGE_CASE_HEALTHY)
        r2 = client.post("/predict", json=EDGE_CASE_HEALTHY)
        assert r1.content == r2.content

    def test_no_model_503(self, bare_client):
        r = bare_client.post("/predict", json=EDGE_CASE_HEALTHY)
        assert r.status_code == 503


class TestExplain:
    def test_additivity_against_predict(self, client):
        pred = client.post("/predict", json=EDGE_CASE_HEALTHY).json()
        exp = client.post("/explain", json=EDGE_CASE_HEALTHY).json()
        total = exp["base_value"] + sum(p["phi"] for p in exp["phis"])
        assert total == pytest.approx(pred["probability_ckd"], abs=1e-6)
        assert exp["probability_ckd"] == pytest.approx(pred["probability_ckd"])

    def test_ranked_by_absolute_phi(self, client):
        exp = client.post("/explain", json=EDGE_CASE_HEALTHY).json()
        mags = [abs(p["phi"]) for p in exp["phis"]]
        assert mags == sorted(mags, reverse=True)
        assert len(exp["phis"]) == 21


class TestCounterfactual:
    def test_round_trip_flips_class(self, client):
        pred = client.post("/predict", json=EDGE_CASE_HEALTHY).json()
        r = client.post("/counterfactual", json=EDGE_CASE_HEALTHY)
        assert r.status_code == 200
        cf = r.json()
        assert cf["found"] is True
        assert cf["reference_prediction"] == pred["predicted_class"]
        again = client.post("/predict", json=cf["counterfactual"])
        assert again.status_code in (200, 422)  # raw pool rows may carry warnings
        assert again.json()["predicted_class"] == cf["counterfactual_prediction"]

    def test_changed_features_report_both_sides(self, client):
        cf = client.post("/counterfactual", json=EDGE_CASE_HEALTHY).json()
        for item in cf["changed_features"]:
            assert item["reference_value"] != item["counterfactual_value"]


class TestPdp:
    def test_binary_feature_two_points(self, client):
        r = client.get("/pdp", params={"feature": "gender"})
        assert r.status_code == 200
        body = r.json()
        assert len(body["points"]) == 2
        assert body["kind"] == "binary-categorical"

    def test_numeric_feature_monotone_grid(self, client):
        body = client.get("/pdp", params={"feature": "eGFR"}).json()
        raws = [p["feature_value_raw"] for p in body["points"]]
        assert raws == sorted(raws)
        assert all(0 <= p["pd"] <= 1 for p in body["points"])

    def test_unknown_feature_404(self, client):
        assert client.get("/pdp", params={"feature": "nope"}).status_code == 404


class TestStatelessness:
    def test_interleaved_requests_do_not_interfere(self, client):
        before = client.post("/predict", json=EDGE_CASE_HEALTHY).json()
        client.post("/predict", json=dict(EDGE_CASE_HEALTHY, eGFR=61, age=80))
        client.post("/counterfactual", json=EDGE_CASE_HEALTHY)
        after = client.post("/predict", json=EDGE_CASE_HEALTHY).json()
        assert before == after
