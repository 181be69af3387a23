import colorama

from inventory.models import low_stock, total_value
from inventory.net import catalog_url


class Store:
    def __init__(self):
        self.items = []

    def add(self, item):
        self.items.append(item)

    def summary(self):
        colorama.init()
        low = ", ".join(low_stock(self.items)) or "none"
        return f"{len(self.items)} items worth {total_value(self.items)}; low: {low} ({catalog_url()})"
