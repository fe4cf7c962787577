class ConfigWarning:
    """
    Represents a problem with one value of a configuration, found while validating it against the schema
    """

    def __init__(self, message: str, value: str = None, key: str = None, item: int = None):
        self.message = message
        self.value = value
        """The raw text of the failing value"""
        self.key = key
        """The dotted path of the key the value belongs to"""
        self.item = item
        """The position of the failing item within a list value, None for a single value"""

    def __str__(self) -> str:
        """
        The entire warning message as a string
        """
        if self.key is None or self.value is None:
            return self.message
        if self.item is None:
            return '{{key: "{}"}}: "{}" {}'.format(self.key, self.value, self.message)
        return '{{key: "{}", item: {}}}: "{}" {}'.format(self.key, self.item, self.value, self.message)

    def __repr__(self):
        return 'ConfigWarning({!r})'.format(str(self))
