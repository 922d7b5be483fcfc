import hashlib
import json
from fractions import Fraction

from rest_framework import serializers

from .exceptions import DomainError
from .folding_maps import wall_volume_closed_form
from .markov_affine import MarkovTriple, as_rational
from .measure_verify import MODES


def rational_string(value):
    value = Fraction(value)
    return f"{value.numerator}/{value.denominator}"


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(',', ':'))


def config_hash(config):
    return hashlib.sha256(canonical_json(config).encode('utf-8')).hexdigest()


class RationalField(serializers.Field):
    """Exact rational carried as a "p/q" string."""
    default_error_messages = {
        'invalid': "'{value}' is not a rational of the form p/q.",
    }

    def to_internal_value(self, data):
        try:
            return as_rational(data, self.field_name)
        except DomainError:
            self.fail('invalid', value=data)

    def to_representation(self, value):
        return rational_string(value)


class IntegerStringField(serializers.Field):
    """Arbitrary-size integers as decimal strings."""

    def to_internal_value(self, data):
        try:
            return int(str(data).strip())
        except ValueError:
            raise serializers.ValidationError(f"'{data}' is not an integer.")

    def to_representation(self, value):
        return str(int(value))


class TripleField(serializers.Field):
    """A Markov triple written "a,b,c"."""

    def to_internal_value(self, data):
        parts = data if isinstance(data, (list, tuple)) else str(data).split(',')
        try:
            entries = [int(str(part).strip()) for part in parts]
        except ValueError:
            raise serializers.ValidationError(f"'{data}' is not a list of integers a,b,c.")
        if len(entries) != 3:
            raise serializers.ValidationError(f"A Markov triple has three entries, got {len(entries)}.")
        try:
            return MarkovTriple(*entries)
        except DomainError as e:
            raise serializers.ValidationError(str(e))

    def to_representation(self, value):
        return ','.join(str(entry) for entry in value.entries)


# --- Run configuration ---

def _positive(value, name):
    if value <= 0:
        raise serializers.ValidationError(f"{name} must be positive.")
    return value


class RunConfigSerializer(serializers.Serializer):
    """Validated configuration of one task; the report's config_hash is taken over its representation."""
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 64 - 1)

    def to_internal_value(self, data):
        data = {key: value for key, value in data.items() if value is not None}
        return super().to_internal_value(data)

    @property
    def config(self):
        return dict(self.data)

    @property
    def config_hash(self):
        return config_hash(self.config)


class MarkovTreeConfig(RunConfigSerializer):
    max_entry = serializers.IntegerField(min_value=1)


class MarkovFitConfig(RunConfigSerializer):
    alpha = RationalField()
    iteration_cap = serializers.IntegerField(min_value=1)

    def validate_alpha(self, value):
        return _positive(value, 'alpha')


class MarkovTriangleConfig(RunConfigSerializer):
    triple = TripleField()
    alpha = RationalField()
    vertex = serializers.ChoiceField(choices=['a', 'b', 'c'], default='a')

    def validate_alpha(self, value):
        return _positive(value, 'alpha')


class FoldConfig(RunConfigSerializer):
    R = serializers.FloatField()
    L = serializers.FloatField(min_value=2)
    simpson_tol = serializers.FloatField()
    bisection_rel_tol = serializers.FloatField()
    quadrature_tol = serializers.FloatField()

    def validate_R(self, value):
        return _positive(value, 'R')

    def validate_simpson_tol(self, value):
        return _positive(value, 'simpson_tol')

    def validate_bisection_rel_tol(self, value):
        return _positive(value, 'bisection_rel_tol')

    def validate_quadrature_tol(self, value):
        return _positive(value, 'quadrature_tol')


class FoldVerifyConfig(FoldConfig):
    samples = serializers.IntegerField(min_value=1)
    mode = serializers.ChoiceField(choices=list(MODES))
    tolerance = serializers.FloatField()
    containment_tol = serializers.FloatField()

    def validate_tolerance(self, value):
        return _positive(value, 'tolerance')


class FoldDefectConfig(FoldConfig):
    r = serializers.FloatField()
    samples = serializers.IntegerField(min_value=1)

    def validate_r(self, value):
        return _positive(value, 'r')


class FoldLipschitzConfig(FoldConfig):
    samples = serializers.IntegerField(min_value=1)


class FoldScalingConfig(RunConfigSerializer):
    R_values = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    L_values = serializers.ListField(child=serializers.FloatField(min_value=2), allow_empty=False)
    samples = serializers.IntegerField(min_value=1)
    lipschitz_samples = serializers.IntegerField(min_value=1)

    def validate_R_values(self, value):
        for R in value:
            _positive(R, 'R')
        return value


class OuCheckConfig(RunConfigSerializer):
    samples = serializers.IntegerField(min_value=1)
    h = serializers.FloatField()

    def validate_h(self, value):
        return _positive(value, 'h')


class ToricContainConfig(RunConfigSerializer):
    alpha = RationalField()
    samples = serializers.IntegerField(min_value=0)
    iteration_cap = serializers.IntegerField(min_value=1)

    def validate_alpha(self, value):
        return _positive(value, 'alpha')


class MinkCurveConfig(RunConfigSerializer):
    R = serializers.FloatField()
    t_values = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    samples = serializers.IntegerField(min_value=1)

    def validate_R(self, value):
        return _positive(value, 'R')

    def validate_t_values(self, value):
        for t in value:
            _positive(t, 't')
        return value


class TubeBoundConfig(MinkCurveConfig):
    r = serializers.FloatField()
    slack = serializers.FloatField(min_value=0, max_value=0.999)
    t_values = serializers.ListField(child=serializers.FloatField(), allow_empty=True)

    def validate_r(self, value):
        return _positive(value, 'r')

    def validate(self, attrs):
        if attrs['r'] >= attrs['R']:
            raise serializers.ValidationError("The cylinder radius r must be smaller than R.")
        return attrs


# --- Result payloads ---

class MarkovTripleField(serializers.ListField):
    """A Markov triple as sorted decimal strings, e.g. ["5", "29", "433"]."""
    child = IntegerStringField()

    def __init__(self, **kwargs):
        kwargs.setdefault('min_length', 3)
        kwargs.setdefault('max_length', 3)
        super().__init__(**kwargs)

    def to_representation(self, data):
        return super().to_representation(getattr(data, 'entries', data))


class AffineMapSerializer(serializers.Serializer):
    A = serializers.ListField(child=serializers.ListField(child=IntegerStringField()))
    t = serializers.ListField(child=RationalField())


class TriangleSerializer(serializers.Serializer):
    vertices = serializers.ListField(child=serializers.ListField(child=RationalField()))
    affine_lengths = serializers.SerializerMethodField()
    area = serializers.SerializerMethodField()

    def get_affine_lengths(self, obj):
        return [rational_string(length) for length in obj.affine_lengths()]

    def get_area(self, obj):
        return rational_string(obj.area())


class MarkovTriangleSerializer(serializers.Serializer):
    triple = MarkovTripleField()
    alpha = RationalField()
    vertex = serializers.IntegerField()
    q_chart = IntegerStringField()
    edge_weights = serializers.ListField(child=IntegerStringField())
    realization = TriangleSerializer()


class HalfStripFitSerializer(serializers.Serializer):
    map = AffineMapSerializer()
    image = TriangleSerializer()
    height = RationalField()
    base_edge_index = serializers.IntegerField()


class NoFitCertificateSerializer(serializers.Serializer):
    alpha = RationalField()
    height_lower_bound = RationalField()
    chain = serializers.ListField(child=serializers.CharField())


class FitResultSerializer(serializers.Serializer):
    alpha = RationalField()
    fits = serializers.BooleanField()
    triple = MarkovTripleField(allow_null=True)
    fit = HalfStripFitSerializer(allow_null=True)
    certificate = NoFitCertificateSerializer(allow_null=True)
    branch_index = serializers.IntegerField(allow_null=True)
    walked = serializers.SerializerMethodField()

    def get_walked(self, obj):
        return [
            {'triple': MarkovTripleField().to_representation(triple), 'height': rational_string(height)}
            for triple, height in obj.walked
        ]


class VolumeEstimateSerializer(serializers.Serializer):
    value = serializers.FloatField()
    std_error = serializers.FloatField()
    n_samples = serializers.IntegerField()
    hits = serializers.IntegerField()
    seed = serializers.IntegerField()
    bounding_box = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))


class MinkowskiCurveSerializer(serializers.Serializer):
    t_values = serializers.ListField(child=serializers.FloatField())
    volumes = serializers.ListField(child=serializers.FloatField())
    std_errors = serializers.ListField(child=serializers.FloatField())
    fitted_dimension = serializers.FloatField()
    content_at_2 = serializers.FloatField(allow_null=True)
    content_t = serializers.FloatField(allow_null=True)
    content_trend = serializers.ListField(child=serializers.FloatField())
    flags = serializers.ListField(child=serializers.CharField())


class ScanReportSerializer(serializers.Serializer):
    max = serializers.FloatField()
    mean = serializers.FloatField()
    argmax = serializers.ListField(child=serializers.FloatField())
    n = serializers.IntegerField()
    seed = serializers.IntegerField()
    mode = serializers.CharField()


class SymplecticityReportSerializer(ScanReportSerializer):
    relative_max = serializers.FloatField()
    jacobian_max = serializers.FloatField()


class LipschitzReportSerializer(ScanReportSerializer):
    secant_max = serializers.FloatField()
    fallbacks = serializers.IntegerField()


class FoldingPlanSerializer(serializers.Serializer):
    R = serializers.FloatField()
    L = serializers.FloatField()
    M = serializers.IntegerField()
    C = serializers.FloatField(source='stretch.C')
    sup_slope = serializers.FloatField(source='stretch.sup_slope')
    slope_bound = serializers.FloatField(source='stretch.slope_bound')
    endpoint = serializers.SerializerMethodField()
    wall_volume = serializers.SerializerMethodField()
    image_radius_bound = serializers.SerializerMethodField()
    stack = serializers.SerializerMethodField()

    def get_endpoint(self, obj):
        return obj.stretch.total / obj.L

    def get_wall_volume(self, obj):
        return wall_volume_closed_form(obj.R, obj.L)

    def get_image_radius_bound(self, obj):
        return obj.image_radius_bound()

    def get_stack(self, obj):
        return [primitive.to_dict() for primitive in obj.stack]


class ReportSerializer(serializers.Serializer):
    schema = serializers.CharField()
    task = serializers.CharField()
    config = serializers.DictField()
    config_hash = serializers.CharField()
    seed = serializers.IntegerField()
    created_at = serializers.DateTimeField()
    result = serializers.JSONField()
