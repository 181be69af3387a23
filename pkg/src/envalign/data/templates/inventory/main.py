from inventory.models import Item
from inventory.store import Store


def main():
    store = Store()
    store.add(Item("bolt", 120, 2))
    store.add(Item("nut", 3, 1))
    store.add(Item("gear", 8, 15))
    print(store.summary())


if __name__ == "__main__":
    main()
