import numpy as np
import pytest

from qgaids.dataset import (SplitSpec, encode, fit_normalizer, identity_normalizer, load_csv,
                            load_schema, split, synth_dataset, synth_schema)
from qgaids.detect import (ModelBundle, build_context, optimize_pipeline, predict_encoded,
                           predict_end_to_end, refit_fitness, score_bundle)
from qgaids.errors import SchemaMismatch
from qgaids.qga import FitnessWeights, QGAConfig
from qgaids.selfsup import SSLConfig, train_ssl

QGA = QGAConfig(population=6, generations=6, seed=2)


@pytest.fixture(scope="module")
def synth_run():
    data, _ = synth_dataset(400, 3, 5, 3.0, seed=4)
    tr, va, te = split(data, SplitSpec(seed=4))
    ssl = train_ssl(tr, SSLConfig(hidden_dim=12, embed_dim=4, proj_dim=4, epochs=3,
                                  batch_size=32))
    schema = synth_schema(data.width)
    bundle, report = optimize_pipeline(tr, va, ssl, QGA, FitnessWeights(), schema,
                                       identity_normalizer(schema), run_oracle=True)
    return data, tr, va, te, ssl, bundle, report


def test_report_contents(synth_run):
    *_, ssl, bundle, report = synth_run
    assert report["budget"]["m"] == 4 and report["budget"]["k"] == len(bundle.subset)
    assert np.all(np.diff(report["trace"]) >= 0)
    assert report["oracle"]["fitness"] >= report["fitness"] - 1e-12
    assert report["oracle"]["gap"] >= -1e-12
    assert report["bundle_digest"] == bundle.digest()
    assert report["fitness"] == pytest.approx(
        0.7 * report["accuracy"] + 0.2 * (1 - report["fpr"]) - 0.1 * report["cost"])


def test_refit_reproduces_fitness(synth_run):
    _, tr, va, *_, ssl, bundle, report = synth_run
    ctx = build_context(ssl.encoder, tr, va, FitnessWeights(), QGA.seed)
    assert refit_fitness(report, ctx, ctx.m) == report["fitness"]


def test_bundle_roundtrip(tmp_path, synth_run):
    *_, te, _, bundle, _ = synth_run
    back = ModelBundle.load(bundle.save(tmp_path / "b.qgz"))
    assert back.digest() == bundle.digest()
    a = predict_encoded(bundle, te)
    b = predict_encoded(back, te)
    assert np.array_equal(a.labels, b.labels) and a.rows_per_second > 0
    counts, _ = score_bundle(back, te)
    assert counts.total == te.n_rows


def test_bundle_validation(synth_run):
    *_, bundle, _ = synth_run
    with pytest.raises(SchemaMismatch):
        ModelBundle(bundle.schema, bundle.normalization, bundle.encoder, (99,),
                    bundle.classifier)
    other, _ = synth_dataset(20, 2, 2, 1.0, seed=0)
    with pytest.raises(SchemaMismatch):
        predict_encoded(bundle, other)


def test_end_to_end_on_raw_rows(nsl_fixture):
    schema = load_schema("nsl_kdd")
    table = load_csv(nsl_fixture, schema)
    params = fit_normalizer(table)
    enc = encode(table, params, schema, temporal=False)
    tr, va, te = split(enc, SplitSpec(seed=1))
    ssl = train_ssl(tr, SSLConfig(hidden_dim=8, embed_dim=4, proj_dim=4, epochs=2,
                                  batch_size=4))
    bundle, _ = optimize_pipeline(tr, va, ssl, QGAConfig(population=4, generations=3),
                                  FitnessWeights(), schema, params)
    raw = predict_end_to_end(bundle, table)
    pre = predict_encoded(bundle, enc)
    assert np.array_equal(raw.labels, pre.labels)
    assert np.allclose(raw.scores, pre.scores, atol=0)
    with pytest.raises(SchemaMismatch):
        predict_end_to_end(bundle, load_csv(nsl_fixture, schema).take([]).__class__(
            synth_schema(3), ()))
