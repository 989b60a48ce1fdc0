import math

from django.utils.translation import gettext_lazy as _

from rest_framework import serializers

from core.models import MODELS, PAYOFFS


ALGORITHMS = ['mc', 'decoupled', 'complete', 'all']


class ExperimentConfigSerializer(serializers.Serializer):
    """Serializer validating a fully merged experiment configuration"""
    model = serializers.ChoiceField(choices=sorted(MODELS))
    K = serializers.FloatField()
    sigma = serializers.FloatField(min_value=0.0)
    payoff = serializers.ChoiceField(choices=sorted(PAYOFFS))
    a = serializers.FloatField(allow_null=True)
    b = serializers.FloatField(allow_null=True)
    c = serializers.FloatField(min_value=0.0)
    x0 = serializers.FloatField()
    T = serializers.FloatField()
    n_steps = serializers.IntegerField(min_value=1)
    N = serializers.IntegerField(min_value=1)
    N2 = serializers.IntegerField(min_value=1, allow_null=True)
    M = serializers.IntegerField(min_value=1)
    algorithm = serializers.ChoiceField(choices=ALGORITHMS)
    seed = serializers.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    out = serializers.CharField()
    threads = serializers.IntegerField(min_value=1)
    dump_paths = serializers.BooleanField()
    no_timings = serializers.BooleanField()
    check_optimality = serializers.BooleanField()
    tolerance = serializers.FloatField(min_value=0.0)

    def validate_T(self, value):
        """Validating the horizon is positive"""
        if not value > 0:
            raise serializers.ValidationError(_('T must be positive'))

        return value

    def validate(self, attrs):
        """Validating cross-field rules of the importance samplers"""
        algorithm = attrs['algorithm']
        if algorithm in ('complete', 'all') and attrs['N'] < 2:
            msg = _('The complete algorithm needs N >= 2')
            raise serializers.ValidationError({'N': msg})

        if algorithm != 'mc' and attrs['sigma'] == 0:
            msg = _('Importance sampling needs sigma > 0')
            raise serializers.ValidationError({'sigma': msg})

        return attrs


class FiniteFloatField(serializers.FloatField):
    """Float rendered as null when it is not finite (strict JSON)"""

    def to_representation(self, value):
        value = float(value)
        return value if math.isfinite(value) else None


class FloatListField(serializers.ListField):
    child = FiniteFloatField()


class ControlField(serializers.Field):
    """ControlPath rendered as its list of hdot values"""

    def to_representation(self, value):
        return [float(v) for v in value.hdot]


class EstimatorReportSerializer(serializers.Serializer):
    """Serializer for one estimator report"""
    algorithm = serializers.CharField()
    N = serializers.IntegerField()
    estimate = FiniteFloatField()
    std_error = FiniteFloatField()
    ess = FiniteFloatField()
    wall_time_s = FiniteFloatField()
    seed = serializers.IntegerField()
    solve_time_s = FiniteFloatField()


class ChaosReportSerializer(serializers.Serializer):
    """Serializer for the propagation-of-chaos experiment"""
    N = serializers.IntegerField()
    M = serializers.IntegerField()
    seed = serializers.IntegerField()
    mean_estimate = FiniteFloatField()
    mean_std_error = FiniteFloatField()
    std_across = FiniteFloatField()
    wall_time_s = FiniteFloatField()
    estimates = FloatListField()


class BVPSolutionSerializer(serializers.Serializer):
    """Serializer for a solved Pontryagin boundary-value problem"""
    kind = serializers.CharField()
    N = serializers.IntegerField(allow_null=True)
    states = serializers.DictField(child=FloatListField())
    adjoints = serializers.DictField(child=FloatListField())
    residual_norm = FiniteFloatField()
    newton_iterations = serializers.IntegerField()
    control = ControlField()
    hat_control = ControlField(allow_null=True)
    objective_value = FiniteFloatField()
    solve_time_s = FiniteFloatField()

    def to_representation(self, instance):
        """Skip the hat control of decoupled solutions"""
        data = super().to_representation(instance)
        if instance.hat_control is None:
            data.pop('hat_control')

        return data


class GapReportSerializer(serializers.Serializer):
    """Serializer for an asymptotic-optimality gap report"""
    algorithm = serializers.CharField()
    scope = serializers.CharField()
    sup_value = FiniteFloatField()
    simplified_value = FiniteFloatField()
    gap = FiniteFloatField()
    relative_gap = FiniteFloatField()
    tolerance = FiniteFloatField()
    certified = serializers.BooleanField()
    inner = BVPSolutionSerializer()
