import pandas as pd
import seaborn as sns
df = pd.read_csv("sales.csv")
sns.barplot(data=df, x="region", y="amount")
