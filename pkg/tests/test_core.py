"""Domain type invariants: label taxonomy, windows, observability."""
import pytest

from delaylab.core import (
    ClickEvent,
    ConfigError,
    FeatureVector,
    InvalidSampleError,
    ObservedSample,
    SampleKind,
    WindowConfig,
    classify_ingestions,
    correct_label,
)

W = WindowConfig(w_o=1800, w_a=30 * 86400)


def click(delay, t0=1000, cid=0):
    return ClickEvent(
        click_id=cid, click_time=t0, conversion_delay=delay, features=FeatureVector((0,), (1.0,), 4)
    )


class TestWindowConfig:
    def test_valid(self):
        assert WindowConfig(0, 1).w_o == 0
        assert W.w_a == 30 * 86400

    @pytest.mark.parametrize("wo,wa", [(10, 10), (10, 5), (-1, 100)])
    def test_invalid(self, wo, wa):
        with pytest.raises(ConfigError):
            WindowConfig(wo, wa)


class TestFeatureVector:
    def test_one_hot(self):
        fv = FeatureVector.one_hot(3, 8)
        assert fv.indices == (3,) and fv.values == (1.0,) and fv.dim == 8

    def test_misaligned(self):
        with pytest.raises(InvalidSampleError):
            FeatureVector((0, 1), (1.0,), 4)

    def test_out_of_range(self):
        with pytest.raises(InvalidSampleError):
            FeatureVector((4,), (1.0,), 4)


class TestCorrectLabel:
    def test_observed_positive_is_true(self):
        assert correct_label(1, 5, W) == 1
        assert correct_label(1, None, W) == 1

    def test_negative_without_conversion(self):
        assert correct_label(0, None, W) == 0

    def test_negative_with_late_conversion(self):
        assert correct_label(0, W.w_o + 1, W) == 1

    def test_negative_with_in_window_conversion_is_contradiction(self):
        with pytest.raises(InvalidSampleError):
            correct_label(0, W.w_o, W)
        with pytest.raises(InvalidSampleError):
            correct_label(0, 0, W)

    def test_bad_label(self):
        with pytest.raises(InvalidSampleError):
            correct_label(2, None, W)


class TestClassifyIngestions:
    def test_never_converts(self):
        out = classify_ingestions(click(None), W)
        assert out == [(SampleKind.RN, 1000 + W.w_o)]

    def test_in_window(self):
        out = classify_ingestions(click(W.w_o), W)
        assert out == [(SampleKind.IP, 1000 + W.w_o)]

    def test_out_of_window_duplicates(self):
        d = W.w_o + 7
        out = classify_ingestions(click(d), W)
        assert out == [(SampleKind.FN, 1000 + W.w_o), (SampleKind.DP, 1000 + d)]

    def test_uncanonicalized_delay_rejected(self):
        with pytest.raises(InvalidSampleError):
            classify_ingestions(click(W.w_a), W)


class TestObservedSample:
    def test_kind_label_consistency(self):
        fv = FeatureVector.one_hot(0, 2)
        ObservedSample(0, 10, 1, SampleKind.IP, fv)
        ObservedSample(0, 10, 1, SampleKind.DP, fv)
        ObservedSample(0, 10, 0, SampleKind.FN, fv)
        ObservedSample(0, 10, 0, SampleKind.RN, fv)
        with pytest.raises(InvalidSampleError):
            ObservedSample(0, 10, 0, SampleKind.IP, fv)
        with pytest.raises(InvalidSampleError):
            ObservedSample(0, 10, 1, SampleKind.FN, fv)

    def test_converted_property(self):
        assert click(5).converted
        assert not click(None).converted
