"""Estimator facade tests."""

import numpy as np
import pytest

from crosstill.corpus import OracleSemantics, VocabSpec, gen_parallel_corpus, gen_sts_set
from crosstill.distiller import MultiStageDistiller
from crosstill.errors import ConfigError, ContractError

from test_pipeline import micro_assistant, micro_student

K = 48


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("est-corpus")
    vocab = VocabSpec.create(tokens_per_language=K, seed=3)
    gen_parallel_corpus(seed=3, n_pairs=400, vocab=vocab, out_dir=root,
                        length_range=(5, 5), splits=(0.5, 0.2, 0.3))
    oracle = OracleSemantics.create(vocab, dim=16, seed=0)
    gen_sts_set(seed=4, n_examples=30, oracle=oracle, out_path=root / "sts.tsv",
                length_range=(5, 5))
    return root


def micro_distiller(corpus, out_dir) -> MultiStageDistiller:
    return MultiStageDistiller(
        corpus_dir=str(corpus), out_dir=str(out_dir),
        sts_path=str(corpus / "sts.tsv"), seed=11,
        epochs=(1, 1, 1, 1), batch_size=50, teacher_dim=16,
        assistant_config=micro_assistant(), student_config=micro_student(),
        max_seq_len=12, eval_every_epoch=False,
    )


class TestParamProtocol:
    def test_get_set_round_trip(self):
        est = MultiStageDistiller(seed=7, variant="ce")
        params = est.get_params()
        assert params["seed"] == 7 and params["variant"] == "ce"
        clone = MultiStageDistiller(**params)
        assert clone.get_params() == params

    def test_set_params_chains_and_validates(self):
        est = MultiStageDistiller()
        assert est.set_params(seed=3).seed == 3
        with pytest.raises(ConfigError, match="unknown parameter"):
            est.set_params(momentum=0.9)

    def test_constructor_stores_verbatim(self):
        est = MultiStageDistiller(epochs=(1, 2, 3, 4))
        assert est.epochs == (1, 2, 3, 4)


class TestBuildConfig:
    def test_requires_corpus(self):
        with pytest.raises(ConfigError, match="corpus_dir"):
            MultiStageDistiller().build_config()

    def test_epochs_length_checked(self, corpus, tmp_path):
        est = micro_distiller(corpus, tmp_path)
        est.epochs = (1, 2)
        with pytest.raises(ConfigError, match="per stage"):
            est.build_config()

    def test_dict_encoder_configs_accepted(self, corpus, tmp_path):
        est = micro_distiller(corpus, tmp_path)
        est.assistant_config = micro_assistant().to_dict()
        est.student_config = micro_student().to_dict()
        cfg = est.build_config()
        assert cfg.student.bottleneck_size == 8

    def test_default_out_dir_beside_corpus(self, corpus):
        est = MultiStageDistiller(corpus_dir=str(corpus))
        cfg = est.build_config()
        assert cfg.out_dir.endswith("run")


class TestFitTransformScore:
    def test_unfitted_access_rejected(self):
        est = MultiStageDistiller()
        with pytest.raises(ContractError, match="not fitted"):
            est.transform([np.array([4, 5, 6])])
        with pytest.raises(ContractError, match="not fitted"):
            est.score()

    def test_fit_trains_and_scores(self, corpus, tmp_path):
        est = micro_distiller(corpus, tmp_path).fit()
        assert hasattr(est, "student_")
        assert est.student_.config.bottleneck_enabled
        acc = est.score()
        assert 0.0 <= acc <= 1.0
        assert -1.0 <= est.sts_rho() <= 1.0

    def test_transform_embeds_sentences(self, corpus, tmp_path):
        est = micro_distiller(corpus, tmp_path / "t").fit()
        sentences = [np.array([4, 5, 6, 7]), np.array([8, 9, 10])]
        out = est.transform(sentences)
        assert out.shape == (2, 16)
        assert np.isfinite(out).all()

    def test_fit_x_overrides_corpus_dir(self, corpus, tmp_path):
        est = micro_distiller(corpus, tmp_path / "x")
        est.corpus_dir = None
        est.fit(X=str(corpus))
        assert est.corpus_dir == str(corpus)
