class Item:
    def __init__(self, name, quantity, unit_price):
        self.name = name
        self.quantity = quantity
        self.unit_price = unit_price

    def value(self):
        return self.quantity * self.unit_price


def total_value(items):
    total = 0
    for item in items:
        total += item.value()
    return total


def low_stock(items, threshold=5):
    return [item.name for item in items if item.quantity < threshold]
