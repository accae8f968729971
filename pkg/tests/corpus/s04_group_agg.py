import pandas as pd
sales = pd.read_csv("sales.csv")
totals = sales.groupby("region")["amount"].agg("sum")
print(totals)
