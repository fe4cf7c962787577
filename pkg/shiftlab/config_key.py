import typing

import pandas as pd

from . import validation
from .config_warning import ConfigWarning

NONE = 'none'
"""The raw value of an optional key that is not set"""


class ConfigKey:
    def __init__(self, name: str, converter: typing.Callable[[str], typing.Any], default: str,
                 validations: typing.Iterable['validation._BaseValidation'] = (), multiple: bool = False,
                 optional: bool = False):
        """
        Creates a new ConfigKey object

        :param name: The dotted key path, for example train.lr
        :param converter: Turns one raw (string) value into its typed value
        :param default: The raw value used when the configuration does not set the key
        :param validations: Validations of the raw values. They are applied in order and the first one that fails
            stops the validation of the key, so later validations can assume the earlier ones passed
        :param multiple: True if the value is a comma separated list
        :param optional: True if the key may be set to none
        """
        self.name = name
        self.converter = converter
        self.default = default
        self.validations = list(validations)
        self.multiple = multiple
        self.optional = optional

    def is_none(self, raw: str) -> bool:
        return self.optional and raw.strip().lower() in (NONE, '')

    def items(self, raw: str) -> typing.List[str]:
        if not self.multiple:
            return [raw.strip()]
        return [item.strip() for item in raw.split(',') if item.strip()]

    def validate(self, raw: str) -> typing.List[ConfigWarning]:
        """
        Creates a list of warnings for a raw value using the validations of this key
        """
        if self.is_none(raw):
            return []
        series = pd.Series(self.items(raw), name=self.name, dtype=object)
        for check in self.validations:
            warnings = check.get_errors(series, self)
            if warnings:
                return warnings
        return []

    def convert(self, raw: str):
        """
        The typed value of a raw value that passed validation: None, a tuple for list keys, or a single value
        """
        if self.is_none(raw):
            return None
        values = [self.converter(item) for item in self.items(raw)]
        return tuple(values) if self.multiple else values[0]
