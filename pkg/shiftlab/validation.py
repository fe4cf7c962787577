import abc
import math
import typing

import pandas as pd

from . import config_key
from .config_warning import ConfigWarning
from .errors import ShiftLabConfigError


class _BaseValidation(abc.ABC):
    """
    The validation base class that defines any object that can create a list of warnings from the values of a
    configuration key
    """

    @abc.abstractmethod
    def get_errors(self, series: pd.Series, key: 'config_key.ConfigKey') -> typing.List[ConfigWarning]:
        """
        Return a list of warnings for the given values

        :param series: The raw (string) values of the key, one element per list item
        :param key: The key the values belong to
        """


class _SeriesValidation(_BaseValidation):
    """
    Implements the _BaseValidation interface by returning a Boolean series for each element that either passes or
    fails the validation
    """

    def __init__(self, **kwargs):
        self._custom_message = kwargs.get('message')

    @property
    def message(self):
        return self._custom_message or self.default_message

    @property
    @abc.abstractmethod
    def default_message(self) -> str:
        """
        A generic message for the validation type, used unless a message kwarg was provided
        """

    @abc.abstractmethod
    def validate(self, series: pd.Series) -> pd.Series:
        """
        Returns a Boolean series, where each value of False is an element in the Series that has failed the validation
        """

    def __and__(self, other: '_SeriesValidation'):
        return _CombinedValidation(self, other)

    def get_errors(self, series: pd.Series, key: 'config_key.ConfigKey'):
        failed = ~self.validate(series).astype(bool)
        return [
            ConfigWarning(
                message=self.message,
                value=series[i],
                key=series.name,
                item=i if key.multiple else None
            )
            for i in series.index[failed]
        ]


class _CombinedValidation(_SeriesValidation):
    """
    Validates if both validations are true for an element
    """

    def __init__(self, validation_a: _SeriesValidation, validation_b: _SeriesValidation):
        self.v_a = validation_a
        self.v_b = validation_b
        super().__init__()

    def validate(self, series: pd.Series):
        return self.v_a.validate(series).astype(bool) & self.v_b.validate(series).astype(bool)

    @property
    def default_message(self):
        return '({}) and ({})'.format(self.v_a.message, self.v_b.message)


class CustomElementValidation(_SeriesValidation):
    """
    Validates using a user-provided function that operates on each element. An element for which the function raises
    fails the validation
    """

    def __init__(self, validation: typing.Callable[[typing.Any], bool], message: str):
        """
        :param message: The message shown if this validation fails. The key and the failing value are prepended to
            it, so 'is not positive' becomes

            {key: "dataset.noise"}: "-1" is not positive
        :param validation: A function that takes one raw value and returns True if it passes the validation
        """
        self._validation = validation
        super().__init__(message=message)

    @property
    def default_message(self):
        return self._custom_message

    def _check(self, value) -> bool:
        try:
            return bool(self._validation(value))
        except (TypeError, ValueError):
            return False

    def validate(self, series: pd.Series) -> pd.Series:
        return series.apply(self._check).astype(bool)


class InRangeValidation(_SeriesValidation):
    """
    Checks that each element is a number within a given range
    """

    def __init__(self, min: float = -math.inf, max: float = math.inf, max_inclusive: bool = False, **kwargs):
        """
        :param min: The minimum (inclusive) value to accept
        :param max: The maximum value to accept, exclusive unless max_inclusive is set
        """
        self.min = min
        self.max = max
        self.max_inclusive = max_inclusive
        super().__init__(**kwargs)

    @property
    def default_message(self):
        return 'was not in the range [{}, {}{}'.format(self.min, self.max, ']' if self.max_inclusive else ')')

    def validate(self, series: pd.Series) -> pd.Series:
        series = pd.to_numeric(series, errors='coerce')
        upper = series <= self.max if self.max_inclusive else series < self.max
        return (series >= self.min) & upper


class CanConvertValidation(_SeriesValidation):
    """
    Checks if each element can be converted to a Python type
    """

    def __init__(self, _type: type, **kwargs):
        """
        :param _type: Any python type. Its constructor is called with each raw value as its only argument; if it
            raises, the value fails the validation
        """
        if not isinstance(_type, type):
            raise ShiftLabConfigError('{} is not a valid type'.format(_type))
        self.type = _type
        super().__init__(**kwargs)

    @property
    def default_message(self):
        return 'cannot be converted to type {}'.format(self.type.__name__)

    def can_convert(self, value) -> bool:
        try:
            self.type(value)
            return True
        except (TypeError, ValueError):
            return False

    def validate(self, series: pd.Series) -> pd.Series:
        return series.apply(self.can_convert).astype(bool)


class IsDistinctValidation(_SeriesValidation):
    """
    Checks that every element is different from each other element
    """

    @property
    def default_message(self):
        return 'contains values that are not unique'

    def validate(self, series: pd.Series) -> pd.Series:
        return ~series.duplicated(keep='first')


class InListValidation(_SeriesValidation):
    """
    Checks that each element is one of a list of possibilities
    """

    def __init__(self, options: typing.Iterable[str], case_sensitive: bool = True, **kwargs):
        """
        :param options: The legal raw values
        """
        self.case_sensitive = case_sensitive
        self.options = list(options)
        super().__init__(**kwargs)

    @property
    def default_message(self):
        return 'is not in the list of legal options ({})'.format(', '.join(str(v) for v in self.options))

    def validate(self, series: pd.Series) -> pd.Series:
        if self.case_sensitive:
            return series.isin(self.options)
        return series.astype(str).str.lower().isin([str(s).lower() for s in self.options])
